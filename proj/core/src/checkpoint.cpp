#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "metaexp/params.hpp"

namespace metaexp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian f64; big-endian hosts need a byte swap");

namespace {

constexpr const char* kMagic = "metaexp-params v1";

std::string manifest_path(const std::string& path) { return path + ".manifest"; }

}  // namespace

// payload: raw little-endian doubles, segment order.  manifest: one header
// line, then `name rank dim... offset count` per segment.
void save_checkpoint(const std::string& path, const ParamVector& params) {
  check(params.size() > 0, "save_checkpoint: empty parameter vector");
  std::ofstream bin(path, std::ios::binary | std::ios::trunc);
  check(bin.good(), "save_checkpoint: cannot open '" + path + "'");
  std::ostringstream man;
  man << kMagic << " segments=" << params.size() << " doubles=" << params.total_len() << "\n";
  std::int64_t off = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& s = params.seg(i);
    const auto& v = s.value.values();
    bin.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
    man << s.name << " " << s.value.rank();
    for (int d : s.value.shape()) man << " " << d;
    man << " " << off << " " << v.size() << "\n";
    off += static_cast<std::int64_t>(v.size());
  }
  check(bin.good(), "save_checkpoint: short write to '" + path + "'");
  bin.close();
  std::ofstream mf(manifest_path(path), std::ios::trunc);
  check(mf.good(), "save_checkpoint: cannot open '" + manifest_path(path) + "'");
  mf << man.str();
  check(mf.good(), "save_checkpoint: short write to manifest");
}

ParamVector load_checkpoint(const std::string& path) {
  std::ifstream mf(manifest_path(path));
  if (!mf.good()) {
    throw ConfigError("load_checkpoint: missing manifest '" + manifest_path(path) + "'");
  }
  std::string magic_word, version_word, seg_kv, dbl_kv;
  mf >> magic_word >> version_word >> seg_kv >> dbl_kv;
  if (magic_word + " " + version_word != kMagic) {
    throw ConfigError("load_checkpoint: unrecognised manifest header in '" + path + "'");
  }
  auto kv_int = [&](const std::string& kv, const char* key) -> std::int64_t {
    const std::string prefix = std::string(key) + "=";
    if (kv.rfind(prefix, 0) != 0) {
      throw ConfigError(std::string("load_checkpoint: malformed manifest field '") + kv + "'");
    }
    return std::stoll(kv.substr(prefix.size()));
  };
  const auto n_segments = kv_int(seg_kv, "segments");
  const auto n_doubles = kv_int(dbl_kv, "doubles");

  std::ifstream bin(path, std::ios::binary);
  if (!bin.good()) throw ConfigError("load_checkpoint: missing payload '" + path + "'");
  std::vector<double> flat(static_cast<std::size_t>(n_doubles));
  bin.read(reinterpret_cast<char*>(flat.data()),
           static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (bin.gcount() != static_cast<std::streamsize>(flat.size() * sizeof(double))) {
    throw ConfigError("load_checkpoint: payload shorter than manifest claims");
  }
  bin.get();
  if (!bin.eof()) throw ConfigError("load_checkpoint: payload longer than manifest claims");

  ParamVector out;
  for (std::int64_t i = 0; i < n_segments; ++i) {
    std::string name;
    int rank = -1;
    if (!(mf >> name >> rank) || rank < 0 || rank > 2) {
      throw ConfigError("load_checkpoint: malformed manifest segment line");
    }
    ad::Shape shape(static_cast<std::size_t>(rank));
    for (int d = 0; d < rank; ++d) {
      if (!(mf >> shape[static_cast<std::size_t>(d)])) {
        throw ConfigError("load_checkpoint: malformed manifest shape");
      }
    }
    std::int64_t off = 0, count = 0;
    if (!(mf >> off >> count) || off < 0 || count < 0 || off + count > n_doubles ||
        ad::numel(shape) != count) {
      throw ConfigError("load_checkpoint: manifest segment does not fit the payload");
    }
    std::vector<double> data(flat.begin() + off, flat.begin() + off + count);
    out.add(name, ad::Tensor::constant(std::move(shape), std::move(data)));
  }
  if (static_cast<std::int64_t>(out.total_len()) != n_doubles) {
    throw ConfigError("load_checkpoint: manifest segments do not cover the payload");
  }
  return out;
}

ParamVector load_checkpoint(const std::string& path, const ParamVector& schema_like) {
  ParamVector loaded = load_checkpoint(path);
  if (!loaded.same_schema(schema_like)) {
    throw ConfigError("load_checkpoint: schema mismatch; file has [" + loaded.schema_str() +
                      "], expected [" + schema_like.schema_str() + "]");
  }
  return loaded;
}

}  // namespace metaexp
