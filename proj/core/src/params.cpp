#include "metaexp/params.hpp"

#include <cstring>

namespace metaexp {

void ParamVector::add(std::string name, ad::Tensor value) {
  check(!name.empty(), "ParamVector::add: empty segment name");
  check(value.defined(), "ParamVector::add: undefined tensor");
  check(!has(name), "ParamVector::add: duplicate segment '" + name + "'");
  segments_.push_back({std::move(name), std::move(value)});
}

std::int64_t ParamVector::total_len() const {
  std::int64_t n = 0;
  for (const auto& s : segments_) n += s.value.size();
  return n;
}

const ad::Tensor& ParamVector::at(const std::string& name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return s.value;
  }
  throw ContractViolation("ParamVector: no segment named '" + name + "'");
}

bool ParamVector::has(const std::string& name) const {
  for (const auto& s : segments_) {
    if (s.name == name) return true;
  }
  return false;
}

bool ParamVector::same_schema(const ParamVector& other) const {
  if (segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].name != other.segments_[i].name) return false;
    if (segments_[i].value.shape() != other.segments_[i].value.shape()) return false;
  }
  return true;
}

std::string ParamVector::schema_str() const {
  std::string out;
  for (const auto& s : segments_) {
    if (!out.empty()) out += " ";
    out += s.name + ad::shape_str(s.value.shape());
  }
  return out;
}

ParamVector ParamVector::as_leaves(ad::Tape& tape) const {
  ParamVector out;
  for (const auto& s : segments_) out.add(s.name, tape.leaf(s.value));
  return out;
}

ParamVector ParamVector::detached() const {
  ParamVector out;
  for (const auto& s : segments_) out.add(s.name, ad::detach(s.value));
  return out;
}

std::vector<double> ParamVector::flatten() const {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(total_len()));
  for (const auto& s : segments_) {
    const auto& v = s.value.values();
    flat.insert(flat.end(), v.begin(), v.end());
  }
  return flat;
}

ParamVector ParamVector::unflatten(const std::vector<double>& flat) const {
  check(static_cast<std::int64_t>(flat.size()) == total_len(),
        "ParamVector::unflatten: flat length mismatch");
  ParamVector out;
  std::size_t off = 0;
  for (const auto& s : segments_) {
    const auto n = static_cast<std::size_t>(s.value.size());
    std::vector<double> data(flat.begin() + off, flat.begin() + off + n);
    out.add(s.name, ad::Tensor::constant(s.value.shape(), std::move(data)));
    off += n;
  }
  return out;
}

namespace {

ParamVector zip(const ParamVector& a, const ParamVector& b, double (*f)(double, double),
                const char* what) {
  check(a.same_schema(b), std::string(what) + ": schema mismatch");
  ParamVector out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& av = a.seg(i).value.values();
    const auto& bv = b.seg(i).value.values();
    std::vector<double> data(av.size());
    for (std::size_t j = 0; j < av.size(); ++j) data[j] = f(av[j], bv[j]);
    out.add(a.seg(i).name, ad::Tensor::constant(a.seg(i).value.shape(), std::move(data)));
  }
  return out;
}

}  // namespace

ParamVector pv_add(const ParamVector& a, const ParamVector& b) {
  return zip(a, b, +[](double x, double y) { return x + y; }, "pv_add");
}

ParamVector pv_scale(const ParamVector& a, double s) {
  ParamVector out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::vector<double> data = a.seg(i).value.values();
    for (double& x : data) x *= s;
    out.add(a.seg(i).name, ad::Tensor::constant(a.seg(i).value.shape(), std::move(data)));
  }
  return out;
}

ParamVector pv_axpy(const ParamVector& a, double alpha, const ParamVector& b) {
  check(a.same_schema(b), "pv_axpy: schema mismatch");
  ParamVector out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& av = a.seg(i).value.values();
    const auto& bv = b.seg(i).value.values();
    std::vector<double> data(av.size());
    for (std::size_t j = 0; j < av.size(); ++j) data[j] = av[j] + alpha * bv[j];
    out.add(a.seg(i).name, ad::Tensor::constant(a.seg(i).value.shape(), std::move(data)));
  }
  return out;
}

ParamVector pv_zeros_like(const ParamVector& a) {
  ParamVector out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.add(a.seg(i).name, ad::Tensor::zeros(a.seg(i).value.shape()));
  }
  return out;
}

bool pv_bit_equal(const ParamVector& a, const ParamVector& b) {
  if (!a.same_schema(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& av = a.seg(i).value.values();
    const auto& bv = b.seg(i).value.values();
    if (std::memcmp(av.data(), bv.data(), av.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace metaexp
