#pragma once

#include <optional>
#include <string>

#include "json.hpp"

namespace metaexp::cli {

// A run directory is self-describing: the resolved config, its content hash
// and the outcome live in manifest.json next to the outputs.
struct RunManifest {
  std::string run_id;
  nlohmann::json config;
  std::string config_hash;  // git-style blob hash of the echoed config bytes
  std::string started_at;   // utc iso-8601
  std::string finished_at;  // empty until the run is finalized
  std::optional<int> exit_status;
};

std::string utc_timestamp();

// temp-file-then-rename so a reader never observes a half-written file
void write_text_atomic(const std::string& path, const std::string& text);

void write_manifest(const std::string& dir, const RunManifest& m);

}  // namespace metaexp::cli
