#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "sadarts/errors.hpp"
#include "sadarts/metrics.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

using namespace sadarts;
using sadarts::testing::random_tensor;

namespace {

StackSpec small_stack(int classes = 3) {
  StackSpec s;
  s.channels = 4;
  s.num_classes = classes;
  return s;
}

// Independent per-edge argmax over candidates other than `none`.
std::vector<std::string> brute_force_ops(const Tensor& alpha, const CellTopology& topo) {
  std::vector<std::string> out;
  const Index cols = alpha.dim(1);
  for (Index r = 0; r < alpha.dim(0); ++r) {
    Index best = -1;
    for (Index c = 0; c < cols; ++c) {
      if (topo.candidates[std::size_t(c)] == "none") continue;
      if (best < 0 || alpha[r * cols + c] > alpha[r * cols + best]) best = c;
    }
    out.push_back(topo.candidates[std::size_t(best)]);
  }
  return out;
}

std::vector<std::string> ops_of(const std::vector<GenotypeEdge>& edges) {
  std::vector<std::string> out;
  for (const auto& e : edges) out.push_back(e.op);
  return out;
}

}  // namespace

TEST_CASE("derive picks the hot index of one-hot rows") {
  const CellTopology topo = make_topology("nb201");
  ArchParams arch = make_arch_params(topo, false, false);
  Rng rng(3);
  std::vector<std::string> expected;
  for (Index r = 0; r < 6; ++r) {
    const Index hot = 1 + Index(uniform_index(rng, 4));
    arch.normal.alpha.data()[r * 5 + hot] = 1.0;
    expected.push_back(topo.candidates[std::size_t(hot)]);
  }
  const Genotype g = derive(arch, topo);
  CHECK(ops_of(g.normal) == expected);
  CHECK(g.reduce.empty());
}

TEST_CASE("derive matches brute-force argmax for every argmax pattern") {
  const CellTopology topo = make_topology("reduced");
  Rng rng(11);
  int patterns = 0;
  for (int code = 0; code < 729; ++code) {
    ArchParams arch = make_arch_params(topo, false, false);
    int c = code;
    for (Index r = 0; r < 6; ++r, c /= 3) {
      // distinct entries with the planted maximum at column c % 3
      std::vector<double> vals{uniform(rng, -2, -1), uniform(rng, -1, 0), uniform(rng, 0.5, 2)};
      std::swap(vals[2], vals[std::size_t(c % 3)]);
      if (uniform01(rng) < 0.5) std::swap(vals[(c % 3 + 1) % 3], vals[(c % 3 + 2) % 3]);
      for (Index j = 0; j < 3; ++j) arch.normal.alpha.data()[r * 3 + j] = vals[std::size_t(j)];
    }
    CHECK(ops_of(derive(arch, topo).normal) == brute_force_ops(arch.normal.alpha, topo));
    ++patterns;
  }
  CHECK(patterns == 729);
}

TEST_CASE("derive excludes none and breaks ties to the lowest index") {
  const CellTopology topo = make_topology("nb201");
  ArchParams arch = make_arch_params(topo, false, false);
  for (Index r = 0; r < 6; ++r) arch.normal.alpha.data()[r * 5] = 5.0;  // none strongest
  const Genotype g = derive(arch, topo);
  for (const auto& e : g.normal) CHECK(e.op == topo.candidates[1]);
}

TEST_CASE("derive is invariant to per-row translation") {
  Rng rng(5);
  for (const std::string space : {"darts", "nb201", "reduced"}) {
    const CellTopology topo = make_topology(space);
    const bool reduce = space == "darts";
    for (int t = 0; t < 200; ++t) {
      ArchParams arch = make_arch_params(topo, reduce, false);
      for (const Tensor& a : arch.alphas()) {
        Tensor table = a;
        for (Index i = 0; i < table.numel(); ++i) table.data()[i] = uniform(rng, -3, 3);
      }
      ArchParams shifted = arch.clone();
      for (const Tensor& a : shifted.alphas()) {
        Tensor table = a;
        const Index cols = table.dim(1);
        for (Index r = 0; r < table.dim(0); ++r) {
          const double shift = uniform(rng, -50, 50);
          for (Index j = 0; j < cols; ++j) table.data()[r * cols + j] += shift;
        }
      }
      CAPTURE(space);
      CHECK(derive(arch, topo) == derive(shifted, topo));
    }
  }
}

TEST_CASE("darts derive keeps two inputs per node") {
  const CellTopology topo = make_topology("darts");
  Rng rng(8);
  ArchParams arch = make_arch_params(topo, true, false);
  for (const Tensor& a : arch.alphas()) {
    Tensor table = a;
    for (Index i = 0; i < table.numel(); ++i) table.data()[i] = uniform(rng, -1, 1);
  }
  const Genotype g = derive(arch, topo);
  CHECK(g.normal.size() == 8);
  CHECK(g.reduce.size() == 8);
  validate_genotype(g, topo, true);
  CHECK(derive(arch, topo) == g);
}

TEST_CASE("edge weights enter the selection value") {
  const CellTopology topo = make_topology("darts");
  ArchParams arch = make_arch_params(topo, false, true);
  // node 2 has two incoming edges; both are kept regardless, so look at
  // node 3 (three incoming edges) and favour its last edge through gamma.
  const auto in = topo.incoming(3);
  REQUIRE(in.size() == 3);
  arch.normal.gamma[1].data() << 0.0, -1.0, 2.0;
  const Genotype soft = derive(arch, topo, SelectionMode::softmax);
  std::vector<int> srcs;
  for (const auto& e : soft.normal) {
    if (e.dst == 3) srcs.push_back(e.src);
  }
  CHECK(srcs == std::vector<int>{topo.edges[std::size_t(in[0])].src, topo.edges[std::size_t(in[2])].src});
  // raw mode multiplies alpha by gamma: with alpha = 1 everywhere the
  // ranking follows gamma as well
  arch.normal.alpha.data().setConstant(1.0);
  const Genotype raw = derive(arch, topo, SelectionMode::raw);
  srcs.clear();
  for (const auto& e : raw.normal) {
    if (e.dst == 3) srcs.push_back(e.src);
  }
  CHECK(srcs == std::vector<int>{topo.edges[std::size_t(in[0])].src, topo.edges[std::size_t(in[2])].src});
}

TEST_CASE("dispersion gaps") {
  const CellTopology topo = make_topology("nb201");
  ArchParams arch = make_arch_params(topo, false, false);
  CHECK(dispersion_report(arch).min_gap == 0.0);
  for (Index r = 0; r < 6; ++r) arch.normal.alpha.data()[r * 5 + 1] = 0.1;
  // 0.216 - 0.196 from three-decimal betas; the exact gap is 0.0206
  const double planted = (std::exp(0.1) - 1.0) / (std::exp(0.1) + 4.0);
  CHECK(std::abs(dispersion_report(arch).min_gap - planted) < 1e-15);
  CHECK(std::abs(dispersion_report(arch).min_gap - 0.020) < 1e-3);

  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    for (Index i = 0; i < arch.normal.alpha.numel(); ++i) arch.normal.alpha.data()[i] = uniform(rng, -2, 2);
    const DispersionReport rep = dispersion_report(arch);
    double worst = 2.0;
    for (Index r = 0; r < 6; ++r) {
      Eigen::VectorXd row = arch.normal.alpha.data().segment(r * 5, 5).matrix();
      Eigen::VectorXd b = row.array().exp();
      b /= b.sum();
      std::vector<double> sorted(b.data(), b.data() + 5);
      std::sort(sorted.begin(), sorted.end(), std::greater<>());
      const double gap = sorted[0] - sorted[1];
      CHECK(std::abs(rep.edges[std::size_t(r)].gap - gap) < 1e-14);
      CHECK(std::is_sorted(rep.edges[std::size_t(r)].sorted_beta.rbegin(), rep.edges[std::size_t(r)].sorted_beta.rend()));
      worst = std::min(worst, gap);
    }
    CHECK(std::abs(rep.min_gap - worst) < 1e-14);
    CHECK(rep.edges[rep.worst_edge].gap == rep.min_gap);
    CHECK(rep.min_gap >= 0.0);
    CHECK(rep.min_gap < 1.0);
  }
  std::vector<DispersionReport> trials(3);
  trials[0].min_gap = 0.1;
  trials[1].min_gap = 0.3;
  trials[2].min_gap = 0.2;
  const GapSummary s = summarize_gaps(trials);
  CHECK(std::abs(s.mean - 0.2) < 1e-15);
  CHECK(s.median == 0.2);
  CHECK(std::abs(s.std - std::sqrt(0.02 / 3.0)) < 1e-15);
  CHECK_THROWS_AS(summarize_gaps(std::span<const DispersionReport>()), ContractError);
}

TEST_CASE("alpha statistics") {
  const std::vector<double> c(7, 2.5);
  const AlphaStats sc = alpha_stats(c);
  CHECK(sc.mean == 2.5);
  CHECK(sc.median == 2.5);
  CHECK(sc.std == 0.0);
  const std::vector<double> v{-1, 0, 1};
  const AlphaStats s = alpha_stats(v);
  CHECK(s.mean == 0.0);
  CHECK(s.median == 0.0);
  CHECK(std::abs(s.std - std::sqrt(2.0 / 3.0)) < 1e-15);
  const std::vector<double> even{4, 1, 3, 2};
  CHECK(alpha_stats(even).median == 2.5);
}

TEST_CASE("variance diagnostics examples") {
  Rng rng(4);
  Tensor x = random_tensor({4, 3, 5, 5}, rng, -1, 1, false);
  {
    std::vector<OperationPtr> ids;
    for (int i = 0; i < 3; ++i) ids.push_back(make_operation("skip_connect", 3, 3, 1, rng));
    const VarianceDiagnostics d = variance_diagnostics(x, ids, Eigen::Vector3d(0.3, -1.0, 2.0));
    // the mixture of identical outputs differs from x only by rounding
    for (double v : d.variance) CHECK(v < 1e-30);
  }
  std::vector<OperationPtr> ops;
  for (const std::string n : {"conv3x3", "skip_connect", "avg_pool3x3"}) ops.push_back(make_operation(n, 3, 3, 1, rng));
  {
    const VarianceDiagnostics d = variance_diagnostics(x, ops, Eigen::Vector3d(-1e3, 1e3, -1e3));
    CHECK(d.variance[1] == 0.0);
    CHECK(d.three_op);
  }
  const VarianceDiagnostics d = variance_diagnostics(x, ops, Eigen::Vector3d(0.1, 0.2, 0.3));
  for (double v : d.variance) CHECK(v >= 0.0);
  CHECK(std::abs(d.covariance(0, 0) - d.variance[0]) < 1e-12);
  CHECK(std::abs(d.joint_covariance - (d.covariance(0, 1) + d.covariance(0, 2) + d.covariance(1, 2))) < 1e-12);
  CHECK(std::abs(d.rhs_conv - (d.variance[1] + d.variance[2])) < 1e-15);
  if (!d.lagrange_beta.empty()) {
    double total = 0.0;
    for (double b : d.lagrange_beta) total += b;
    CHECK(std::abs(total - 1.0) < 1e-9);
  }

  const CellTopology topo = make_topology("reduced");
  const Network net = build_supernet(topo, small_stack(), 1);
  const ArchParams arch = make_arch_params(topo, false, false);
  Tensor img = random_tensor({1, 1, 8, 8}, rng, 0, 1, false);
  CHECK_THROWS_AS(variance_diagnostics(net, arch, 0, topo.searchable_edges()[0], img), ContractError);
  Tensor batch = random_tensor({4, 1, 8, 8}, rng, 0, 1, false);
  const VarianceDiagnostics nd = variance_diagnostics(net, arch, 0, topo.searchable_edges()[0], batch);
  CHECK(nd.ops == topo.candidates);
}

TEST_CASE("landscape center equals the unperturbed point") {
  const CellTopology topo = make_topology("reduced");
  const Network net = build_supernet(topo, small_stack(), 2);
  ArchParams arch = make_arch_params(topo, false, false);
  Rng rng(9);
  for (Index i = 0; i < arch.normal.alpha.numel(); ++i) arch.normal.alpha.data()[i] = uniform(rng, -1, 1);
  Batch batch{random_tensor({6, 1, 8, 8}, rng, 0, 1, false), {0, 1, 2, 0, 1, 2}};
  const std::vector<double> coords{-1.0, -0.5, 0.0, 0.5, 1.0};
  const LandscapeGrid g = landscape_scan(net, arch, batch, coords, 17);
  const EvalMetrics center = evaluate(net, &arch, batch);
  CHECK(g.loss[2][2] == center.loss);
  CHECK(g.accuracy[2][2] == center.accuracy);
  CHECK(g.center_loss == center.loss);
  CHECK(g.mean_abs_delta_unit_ball > 0.0);
  const LandscapeGrid again = landscape_scan(net, arch, batch, coords, 17);
  CHECK(again.loss == g.loss);
  CHECK(landscape_scan(net, arch, batch, coords, 18).loss != g.loss);
  const std::vector<double> lopsided{-1.0, 0.0, 2.0};
  CHECK_THROWS_AS(landscape_scan(net, arch, batch, lopsided, 1), ContractError);

  // each direction row has the norm of its alpha row
  const auto [d1, d2] = landscape_directions(arch, 17);
  for (Index r = 0; r < 6; ++r) {
    double nd = 0.0, na = 0.0;
    for (Index j = 0; j < 3; ++j) {
      nd += d1[std::size_t(r * 3 + j)] * d1[std::size_t(r * 3 + j)];
      na += arch.normal.alpha[r * 3 + j] * arch.normal.alpha[r * 3 + j];
    }
    CHECK(std::abs(std::sqrt(nd) - std::sqrt(na)) < 1e-12);
  }
}

TEST_CASE("discrepancy gap vanishes for one-hot alpha") {
  const CellTopology topo = make_topology("reduced");
  const Network net = build_supernet(topo, small_stack(), 3);
  Rng rng(10);
  Batch batch{random_tensor({6, 1, 8, 8}, rng, 0, 1, false), {0, 1, 2, 0, 1, 2}};
  ArchParams arch = make_arch_params(topo, false, false);
  for (Index r = 0; r < 6; ++r) {
    for (Index j = 0; j < 3; ++j) arch.normal.alpha.data()[r * 3 + j] = j == r % 3 ? 1e3 : -1e3;
  }
  const DiscrepancyGap hot = discrepancy_gap(net, arch, derive(arch, topo), batch);
  CHECK(hot.loss_gap < 1e-9);
  CHECK(hot.accuracy_gap == 0.0);

  const ArchParams uniform_arch = make_arch_params(topo, false, false);
  const DiscrepancyGap mixed = discrepancy_gap(net, uniform_arch, derive(uniform_arch, topo), batch);
  CHECK(mixed.loss_gap > 0.0);
}

TEST_CASE("skip fraction counts skip argmax rows") {
  const CellTopology topo = make_topology("reduced");
  ArchParams arch = make_arch_params(topo, false, false);
  CHECK(skip_fraction(arch, topo) == 0.0);  // ties go to conv3x3
  const int skip = topo.candidate_index("skip_connect");
  for (Index r = 0; r < 4; ++r) arch.normal.alpha.data()[r * 3 + skip] = 1.0;
  CHECK(std::abs(skip_fraction(arch, topo) - 4.0 / 6.0) < 1e-15);
}
