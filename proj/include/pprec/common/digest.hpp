#pragma once

#include <cstdint>
#include <string>

namespace pprec {

// FNV-1a over file contents, hex-encoded. Used for manifest input digests and
// vocabulary fingerprints; collision resistance beyond accident detection is
// not required here.
std::string digest_bytes(const void* data, std::size_t size);
std::string digest_file(const std::string& path);
std::string digest_string(const std::string& text);

}  // namespace pprec
