#pragma once

#include "protomatch/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace protomatch {

inline constexpr const char* kCheckpointHeader = "protomatch-ckpt v1";

struct NamedMatrix {
  std::string name;
  Matrix value;
};

/// Text format: the header line, then per block a `name rows cols` line
/// followed by `rows` lines of `cols` reals printed with 17 significant digits.
void write_checkpoint(std::ostream& out, const std::vector<NamedMatrix>& blocks);
void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedMatrix>& blocks);

/// Throws Error naming the offending block on malformed or truncated input.
std::vector<NamedMatrix> read_checkpoint(std::istream& in);
std::vector<NamedMatrix> read_checkpoint(const std::filesystem::path& path);

}  // namespace protomatch
