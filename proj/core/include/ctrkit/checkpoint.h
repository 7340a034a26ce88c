#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ctrkit/params.h"

namespace ctrkit {

/// Text checkpoint: header `CKPT v1 model=<name> n=<n> seed=<seed>`, then for
/// each tensor a `tensor <name> <rows> <cols>` line followed by `rows` lines
/// of shortest round-trip decimals.
struct Checkpoint {
  std::string model;
  std::size_t num_fields = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(std::ostream& out, const std::string& model, std::size_t num_fields,
                     std::uint64_t seed, const ParamStore& params);
Checkpoint load_checkpoint(std::istream& in);

/// Copies every checkpoint tensor into `params`; names and shapes must match
/// exactly and every parameter must be covered.
void restore(const Checkpoint& ckpt, ParamStore& params);

}  // namespace ctrkit
