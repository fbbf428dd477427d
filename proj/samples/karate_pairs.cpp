// Node influence on a contrastive graph embedding of Zachary's karate club:
// for the pair (0, 33), the two faction leaders, which members matter most?

#include <algorithm>
#include <cstdio>
#include <numeric>

#include "vif/vif.hpp"

int main() {
  using namespace vif;
  EmbeddingOptions opt;
  opt.ridge = 300.0;
  const EmbeddingModel model(Graph::karate(), 2, WalkParams{200, 6, 3}, 1, opt);

  TrainConfig cfg;
  cfg.seed = 1;
  const TrainResult fit = train(model, model.full_presence(), cfg);
  std::printf("embedding loss %.4f, |grad| %.2e\n", fit.loss, fit.grad_norm);

  const PairLossTarget pair = pair_loss_target(model, 0, 33);
  std::vector<std::size_t> nodes(model.n_objects());
  std::iota(nodes.begin(), nodes.end(), std::size_t{0});
  auto records = attribute_target(model, fit.params.theta, pair, nodes);
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.vif_score > b.vif_score; });

  std::printf("pair loss l(0, 33) = %.4f\n", pair.value(fit.params.theta));
  std::printf("%6s %7s %12s\n", "node", "degree", "vif");
  for (std::size_t k = 0; k < 8; ++k) {
    const std::size_t u = records[k].object_id;
    std::printf("%6zu %7zu %12.4f\n", u, model.graph().neighbors(u).size(), records[k].vif_score);
  }
}
