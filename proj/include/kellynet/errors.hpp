#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kellynet {

/// Offered load at one or more nodes reaches the tail service rate, so the
/// per-node normalizing series diverges.
class InstabilityError : public std::runtime_error {
 public:
  explicit InstabilityError(std::vector<int> nodes)
      : std::runtime_error(make_message(nodes)), nodes_(std::move(nodes)) {}

  const std::vector<int>& nodes() const noexcept { return nodes_; }

 private:
  static std::string make_message(const std::vector<int>& nodes) {
    std::string msg = "unstable node(s):";
    for (int j : nodes) msg += " " + std::to_string(j);
    msg += " (offered load >= tail service rate, normalizing series diverges)";
    return msg;
  }

  std::vector<int> nodes_;
};

/// A routing chain is not irreducible, so its visit rates are not uniquely
/// determined.
class ReducibleChainError : public std::runtime_error {
 public:
  explicit ReducibleChainError(int chain_id)
      : std::runtime_error("routing chain " + std::to_string(chain_id) +
                           " is not irreducible; visit rates are not unique"),
        chain_id_(chain_id) {}

  int chain_id() const noexcept { return chain_id_; }

 private:
  int chain_id_;
};

class StateSpaceTooLargeError : public std::runtime_error {
 public:
  StateSpaceTooLargeError(std::uint64_t count, std::uint64_t cap)
      : std::runtime_error("state space has " + std::to_string(count) +
                           " states, above the cap of " + std::to_string(cap)),
        count_(count),
        cap_(cap) {}

  std::uint64_t count() const noexcept { return count_; }
  std::uint64_t cap() const noexcept { return cap_; }

 private:
  std::uint64_t count_;
  std::uint64_t cap_;
};

/// Malformed or unreadable model file (structural problems; semantic problems
/// are Violations from validate_open/validate_closed).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& message) : std::runtime_error(message) {}
};

/// Simulation statistics and an analytic report were produced from different
/// models.
class ModelMismatchError : public std::runtime_error {
 public:
  explicit ModelMismatchError(const std::string& message) : std::runtime_error(message) {}
};

}  // namespace kellynet
