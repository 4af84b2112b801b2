#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "fwi/ad/array4.hpp"

namespace fwi::ad {

struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
  bool valid() const noexcept { return id != std::numeric_limits<std::size_t>::max(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so creation
/// order is a topological order and backward is a single reverse sweep.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Var constant(Array4 value);
  Var parameter(Array4 value);

  const Array4& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient accumulated by the last backward pass (zeros if unreached).
  const Array4& grad(Var v);
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  const std::string& tag(Var v) const { return nodes_.at(v.id).tag; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// loss must hold exactly one element.
  void backward(Var loss);
  /// Seeds d out = seed and propagates to every leaf parameter.
  void backward(Var out, const Array4& seed);

  // Op-implementation interface.
  Var add_node(std::string tag, Array4 value, std::vector<Var> inputs, BackwardFn fn);
  /// Accumulator for v, allocated (zeroed) on first use.
  Array4& grad_acc(Var v);
  const Array4& grad_of(std::size_t id) const { return nodes_[id].grad; }
  const std::vector<Var>& inputs_of(std::size_t id) const { return nodes_[id].inputs; }

 private:
  struct Node {
    std::string tag;
    Array4 value;
    Array4 grad;
    std::vector<Var> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

}  // namespace fwi::ad
