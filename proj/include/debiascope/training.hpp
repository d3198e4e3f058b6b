#pragma once

#include <functional>
#include <span>
#include <vector>

#include "debiascope/graph.hpp"
#include "debiascope/optim.hpp"
#include "debiascope/rng.hpp"

namespace debiascope::training {

struct TrainControl {
  double lr = 1e-3;
  int max_epochs = 200;
  int patience = 5;
  int batch_size = 256;
};

struct EpochLog {
  int epoch = 0;
  double train_obj = 0.0;  // mean of batch losses seen during the epoch
  double val_obj = 0.0;
};

struct LoopResult {
  nd::NamedTensors best_params;  // best validation checkpoint, never simply the last epoch
  int best_epoch = 0;            // 0 denotes the initialization
  double best_val = 0.0;
  std::vector<EpochLog> log;
};

// Minibatch Adam with early stopping. The caller owns the graph and
// binds each batch through `bind_batch`; `eval_val` scores the
// validation split with models in their current state. Only
// `trainable` parameter nodes are updated.
inline LoopResult run_training(nd::Graph& g, int loss_node,
                               std::vector<std::size_t> train_idx,
                               const TrainControl& ctl,
                               const std::vector<int>& trainable,
                               const std::function<void(std::span<const std::size_t>)>& bind_batch,
                               const std::function<double()>& eval_val,
                               Rng& order_rng) {
  std::vector<nd::Tensor*> params;
  std::vector<const nd::Tensor*> cparams;
  for (int id : trainable) {
    params.push_back(&g.param_value(id));
    cparams.push_back(&g.param_value(id));
  }
  nd::Adam opt(nd::AdamConfig{ctl.lr, 0.9, 0.999, 1e-8}, cparams);

  LoopResult res;
  res.best_params = g.export_params();
  res.best_epoch = 0;
  res.best_val = eval_val();
  res.log.push_back({0, 0.0, res.best_val});

  int since_best = 0;
  for (int epoch = 1; epoch <= ctl.max_epochs; ++epoch) {
    order_rng.shuffle(train_idx);
    double obj_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < train_idx.size(); start += static_cast<std::size_t>(ctl.batch_size)) {
      std::size_t stop = std::min(train_idx.size(), start + static_cast<std::size_t>(ctl.batch_size));
      bind_batch(std::span<const std::size_t>(train_idx.data() + start, stop - start));
      g.forward();
      g.backward(loss_node);
      std::vector<const nd::Tensor*> grads;
      for (int id : trainable) grads.push_back(&g.grad(id));
      opt.step(params, grads);
      obj_sum += g.value(loss_node).data[0];
      ++batches;
    }
    double val = eval_val();
    res.log.push_back({epoch, batches ? obj_sum / batches : 0.0, val});
    if (val < res.best_val) {
      res.best_val = val;
      res.best_epoch = epoch;
      res.best_params = g.export_params();
      since_best = 0;
    } else if (++since_best >= ctl.patience) {
      break;
    }
  }
  g.import_params(res.best_params);
  return res;
}

}  // namespace debiascope::training
