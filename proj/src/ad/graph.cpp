#include "fwi/ad/graph.hpp"

#include "fwi/error.hpp"

namespace fwi::ad {

Var Graph::constant(Array4 value) {
  nodes_.push_back(Node{"constant", std::move(value), {}, {}, {}, false});
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(Array4 value) {
  nodes_.push_back(Node{"parameter", std::move(value), {}, {}, {}, true});
  return Var{nodes_.size() - 1};
}

Var Graph::add_node(std::string tag, Array4 value, std::vector<Var> inputs, BackwardFn fn) {
#ifndef NDEBUG
  require(value.all_finite(), ErrorKind::numerical, "non-finite value produced by op " + tag);
#endif
  bool rg = false;
  for (Var in : inputs) rg = rg || nodes_.at(in.id).requires_grad;
  nodes_.push_back(Node{std::move(tag), std::move(value), {}, std::move(inputs), rg ? std::move(fn) : BackwardFn{}, rg});
  return Var{nodes_.size() - 1};
}

Array4& Graph::grad_acc(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad = Array4(n.value.dims(), std::vector<double>(n.value.size(), 0.0));
  return n.grad;
}

const Array4& Graph::grad(Var v) { return grad_acc(v); }

void Graph::backward(Var loss) {
  require(value(loss).size() == 1, ErrorKind::shape, "backward: loss must be a scalar");
  backward(loss, Array4(1, 1, 1, 1, 1.0));
}

void Graph::backward(Var out, const Array4& seed) {
  require(seed.dims() == value(out).dims(), ErrorKind::shape, "backward: seed dims differ from output dims");
  for (Node& n : nodes_) n.grad = Array4();
  grad_acc(out) = seed;
  for (std::size_t id = out.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.backward) continue;
    n.backward(*this, id);
  }
}

}  // namespace fwi::ad
