#pragma once

#include "otbb/state.hpp"

#include <cstdint>
#include <string>

namespace otbb {

struct CheckpointInfo {
  double mu = 0.0;
  int K = 0;
  std::uint64_t mesh_hash = 0;
  long n = 0;  // length of phi
  long m = 0;  // length of rho and s
};

/// Writes `<stem>.txt` (phi, rho, s, lambda and both boundary densities, one
/// value per line, each block preceded by its name and length) and
/// `<stem>.json` with the metadata.
void write_checkpoint(const std::string& stem, const PrimalDualState& st,
                      const Discretization& d);

/// Reads both files back. Throws ParseError on malformed input and
/// InputError when the metadata does not match `d`.
PrimalDualState read_checkpoint(const std::string& stem, const Discretization& d);

CheckpointInfo read_checkpoint_info(const std::string& stem);

}  // namespace otbb
