#pragma once

#include <string>
#include <vector>

#include "metaexp/ad.hpp"

namespace metaexp {

// Ordered, named parameter segments.  Segments may be tape-attached (inside a
// meta-gradient graph) or constants (frozen snapshots handed to rollout
// workers).  The schema -- segment order, names and shapes -- is what
// checkpoint loading validates against.
class ParamVector {
 public:
  struct Segment {
    std::string name;
    ad::Tensor value;
  };

  ParamVector() = default;

  void add(std::string name, ad::Tensor value);
  std::size_t size() const { return segments_.size(); }
  std::int64_t total_len() const;
  const Segment& seg(std::size_t i) const { return segments_[i]; }
  const ad::Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const;

  const std::vector<Segment>& segments() const { return segments_; }

  bool same_schema(const ParamVector& other) const;
  std::string schema_str() const;

  // all segments as tape leaves (values copied onto the tape)
  ParamVector as_leaves(ad::Tape& tape) const;
  // all segments as constants
  ParamVector detached() const;

  // flat view in segment order; unflatten requires an exact length match
  std::vector<double> flatten() const;
  ParamVector unflatten(const std::vector<double>& flat) const;

 private:
  std::vector<Segment> segments_;
};

// elementwise arithmetic over matching schemas (constant results)
ParamVector pv_add(const ParamVector& a, const ParamVector& b);
ParamVector pv_scale(const ParamVector& a, double s);
ParamVector pv_axpy(const ParamVector& a, double alpha, const ParamVector& b);  // a + alpha*b
ParamVector pv_zeros_like(const ParamVector& a);
bool pv_bit_equal(const ParamVector& a, const ParamVector& b);

// checkpoint: `path` gets raw little-endian f64 payload, `path.manifest` a
// text schema (segment names, shapes, offsets).  Loading validates the
// manifest against the payload and the expected schema, if any.
void save_checkpoint(const std::string& path, const ParamVector& params);
ParamVector load_checkpoint(const std::string& path);
ParamVector load_checkpoint(const std::string& path, const ParamVector& schema_like);

}  // namespace metaexp
