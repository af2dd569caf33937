#pragma once

#include <stdexcept>
#include <string>

namespace innet {

// Shape mismatch between a tensor and the layer consuming it.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A forward trace or gradient list that does not belong to the network.
class ConsistencyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Invalid user-supplied values (distributions, configs, list lengths).
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Violation of the node/fusion exchange contract. node_id is 1-based, 0 when
// the violation is not attributable to a single node.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(int node_id, const std::string& what)
      : std::runtime_error("node " + std::to_string(node_id) + ": " + what),
        node_id_(node_id) {}

  int node_id() const noexcept { return node_id_; }

 private:
  int node_id_;
};

// Inference was requested without one of the J views.
class UnavailableViewError : public std::runtime_error {
 public:
  explicit UnavailableViewError(int node_id)
      : std::runtime_error("view of node " + std::to_string(node_id) +
                           " is unavailable"),
        node_id_(node_id) {}

  int node_id() const noexcept { return node_id_; }

 private:
  int node_id_;
};

}  // namespace innet
