#include "advinn/tape.hpp"

#include <algorithm>
#include <unordered_set>

#include "advinn/error.hpp"

namespace advinn {

namespace {
thread_local Tape* g_active_tape = nullptr;
}  // namespace

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape* tape) : previous_(g_active_tape) { g_active_tape = tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void Tape::record(std::vector<Tensor> inputs, const Tensor& output, BackwardFn backward) {
  producer_[output.storage()] = nodes_.size();
  nodes_.push_back(Node{std::move(inputs), output, std::move(backward)});
}

void Tape::clear() {
  nodes_.clear();
  producer_.clear();
}

void Tape::backward(const Tensor& loss) { run_backward(loss, nullptr); }

void Tape::backward(const Tensor& loss, std::span<const Tensor> wrt) {
  std::vector<const TensorStorage*> targets;
  targets.reserve(wrt.size());
  for (const auto& t : wrt) targets.push_back(t.storage());
  run_backward(loss, &targets);
}

void Tape::run_backward(const Tensor& loss, const std::vector<const TensorStorage*>* wrt) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " + shape_to_string(loss.shape()));
  }

  std::unordered_set<const TensorStorage*> target_set;
  if (wrt) target_set.insert(wrt->begin(), wrt->end());
  auto is_target_leaf = [&](const Tensor& t) {
    if (producer_.contains(t.storage())) return false;
    return wrt ? target_set.contains(t.storage()) : t.requires_grad();
  };

  auto loss_it = producer_.find(loss.storage());
  if (loss_it == producer_.end()) {
    if (is_target_leaf(loss)) {
      const double one = 1.0;
      Tensor handle = loss;
      handle.accumulate_grad(std::span<const double>(&one, 1));
    }
    return;
  }
  const std::size_t last = loss_it->second;

  // Forward sweep: a node is relevant when some input is a target leaf or
  // the output of another relevant node.
  std::vector<char> relevant(last + 1, 0);
  for (std::size_t i = 0; i <= last; ++i) {
    for (const auto& in : nodes_[i].inputs) {
      auto p = producer_.find(in.storage());
      if (p != producer_.end() ? relevant[p->second] != 0 : is_target_leaf(in)) {
        relevant[i] = 1;
        break;
      }
    }
  }
  if (!relevant[last]) return;

  std::vector<std::vector<double>> node_grad(last + 1);
  node_grad[last].assign(1, 1.0);

  struct LeafGrad {
    Tensor tensor;
    std::vector<double> grad;
  };
  std::unordered_map<const TensorStorage*, LeafGrad> leaf_grads;
  std::vector<std::span<double>> in_bufs;

  for (std::size_t i = last + 1; i-- > 0;) {
    if (!relevant[i] || node_grad[i].empty()) continue;
    Node& node = nodes_[i];
    in_bufs.assign(node.inputs.size(), std::span<double>());
    for (std::size_t j = 0; j < node.inputs.size(); ++j) {
      const Tensor& in = node.inputs[j];
      auto p = producer_.find(in.storage());
      if (p != producer_.end()) {
        if (!relevant[p->second]) continue;
        auto& buf = node_grad[p->second];
        if (buf.empty()) buf.assign(in.numel(), 0.0);
        in_bufs[j] = buf;
      } else if (is_target_leaf(in)) {
        auto [it, inserted] = leaf_grads.try_emplace(in.storage(), LeafGrad{in, {}});
        if (inserted) it->second.grad.assign(in.numel(), 0.0);
        in_bufs[j] = it->second.grad;
      }
    }
    node.backward(node_grad[i], in_bufs);
    node_grad[i].clear();
    node_grad[i].shrink_to_fit();
  }

  for (auto& [storage, leaf] : leaf_grads) leaf.tensor.accumulate_grad(leaf.grad);
}

}  // namespace advinn
