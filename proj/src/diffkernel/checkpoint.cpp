#include "protomatch/diffkernel/checkpoint.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace protomatch {

namespace {

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedMatrix>& blocks) {
  out << kCheckpointHeader << '\n';
  for (const NamedMatrix& b : blocks) {
    if (b.name.empty() || b.name.find_first_of(" \t\n") != std::string::npos) {
      throw Error("checkpoint block name '" + b.name + "' must be a non-empty token");
    }
    out << b.name << ' ' << b.value.rows() << ' ' << b.value.cols() << '\n';
    for (Index r = 0; r < b.value.rows(); ++r) {
      for (Index c = 0; c < b.value.cols(); ++c) {
        if (c > 0) out << ' ';
        out << format_real(b.value(r, c));
      }
      out << '\n';
    }
  }
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedMatrix>& blocks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  write_checkpoint(out, blocks);
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

std::vector<NamedMatrix> read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointHeader) {
    throw Error("checkpoint: missing header '" + std::string(kCheckpointHeader) + "'");
  }
  std::vector<NamedMatrix> blocks;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream head(line);
    NamedMatrix block;
    long long rows = -1;
    long long cols = -1;
    std::string extra;
    if (!(head >> block.name >> rows >> cols) || (head >> extra) || rows < 0 || cols < 0) {
      throw Error("checkpoint: malformed block header '" + line + "'");
    }
    block.value.resize(rows, cols);
    for (long long r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) {
        throw Error("checkpoint block '" + block.name + "': truncated at row " + std::to_string(r));
      }
      const char* p = line.data();
      const char* end = line.data() + line.size();
      for (long long c = 0; c < cols; ++c) {
        while (p < end && (*p == ' ' || *p == '\t')) ++p;
        double v = 0.0;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc() || !std::isfinite(v)) {
          throw Error("checkpoint block '" + block.name + "': bad value at row " + std::to_string(r) +
                      ", column " + std::to_string(c));
        }
        block.value(r, c) = v;
        p = next;
      }
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p != end) {
        throw Error("checkpoint block '" + block.name + "': extra values at row " + std::to_string(r));
      }
    }
    blocks.push_back(std::move(block));
  }
  return blocks;
}

std::vector<NamedMatrix> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace protomatch
