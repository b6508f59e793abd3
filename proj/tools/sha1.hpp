#pragma once

#include <string>

namespace metaexp::cli {

// standard sha-1 digest as lowercase hex
std::string sha1_hex(const std::string& bytes);

// git-style content hash: sha-1 over "blob <len>\0<content>"
std::string git_blob_hash(const std::string& content);

}  // namespace metaexp::cli
