#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "soft_tue/error.hpp"
#include "soft_tue/protocol.hpp"

namespace soft_tue {

// A set of bit indices to XOR-flip. Kept sorted and unique; empty is the
// identity.
class Mutation {
 public:
  Mutation() = default;

  explicit Mutation(std::vector<std::size_t> bits, std::size_t bit_len = kSetupCompleteBits)
      : bits_(std::move(bits)) {
    std::sort(bits_.begin(), bits_.end());
    if (std::adjacent_find(bits_.begin(), bits_.end()) != bits_.end())
      throw Error(Errc::OutOfRange, "duplicate bit index in mutation");
    if (!bits_.empty() && bits_.back() >= bit_len)
      throw Error(Errc::OutOfRange, "bit index " + std::to_string(bits_.back()) + " >= " +
                                        std::to_string(bit_len));
  }

  Mutation(std::initializer_list<std::size_t> bits) : Mutation(std::vector<std::size_t>(bits)) {}

  const std::vector<std::size_t>& bits() const noexcept { return bits_; }
  std::size_t size() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return bits_.empty(); }

  friend bool operator==(const Mutation&, const Mutation&) = default;

 private:
  std::vector<std::size_t> bits_;
};

inline Frame mutate(const Frame& frame, const Mutation& m) {
  Frame out = frame;
  for (auto b : m.bits()) out.flip(b);  // throws OutOfRange past bit_len
  return out;
}

}  // namespace soft_tue
