// Generate a small benchmark, train a SAT model, evaluate it and query the index.

#include <iostream>

#include "sat/commands.hpp"

int main() {
  sat::RunConfig cfg;
  cfg.seed = 3;
  cfg.gen.n_products = 80;
  cfg.n_pos = cfg.n_neg = 1000;
  cfg.train.steps = 300;
  cfg.train.model.d1 = cfg.train.model.d2 = cfg.train.model.hidden_dim = 16;

  const sat::Dataset ds = sat::make_dataset(cfg);
  std::cout << "commodities=" << ds.universe.size() << " train_pairs=" << ds.train.size()
            << " val_pairs=" << ds.val.size() << '\n';

  const auto trained = sat::train(cfg.train_config(ds.gen.text_vocab(), ds.gen.image_dim),
                                  ds.train, ds.val, ds.universe);
  const auto ev = sat::evaluate(trained.params, ds.val, ds.universe);
  std::cout << "val f1=" << ev.metrics.f1 << " precision=" << ev.metrics.precision
            << " recall=" << ev.metrics.recall << '\n';

  // Stored rows are [p, q]; a query [p, -q] turns s - t into one inner product.
  const auto store = sat::build_index(trained.params, ds.universe);
  const auto& probe = ds.universe.items().front();
  for (const auto& hit : sat::top_k(store, sat::query_for(trained.params, probe, store), 5)) {
    std::cout << "  id=" << hit.id << " score=" << hit.score
              << (hit.score > 0 ? " identical" : "") << '\n';
  }
}
