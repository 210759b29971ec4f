#pragma once

#include <filesystem>
#include <iosfwd>

#include "mpslab/mps.hpp"

namespace mpslab {

// Text record, version 1:
//
//   mpslab-mps 1
//   sites <N>
//   phys <f>
//   label none | label <site> <C>
//   bonds <χ_1> … <χ_{N−1}>
//   core <j> <extent>…        (one header per core, followed by one line of
//   <values, row-major, %.17g>  row-major entries)
//
// Values round-trip exactly.
inline constexpr int kMpsFormatVersion = 1;

void write_mps(std::ostream& os, const Mps& w);
Mps read_mps(std::istream& is);

void save_mps(const std::filesystem::path& path, const Mps& w);
Mps load_mps(const std::filesystem::path& path);

}  // namespace mpslab
