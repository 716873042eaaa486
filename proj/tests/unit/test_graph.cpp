#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "oracles.hpp"
#include "spikegrad/executor.hpp"
#include "spikegrad/graph_io.hpp"
#include "spikegrad/parameters.hpp"

using namespace spikegrad;
using spikegrad::testing::bitwise_equal;

namespace {

using D = Tensor<double>;

LayerNode with_id(LayerNode n, NodeId id) {
  n.id = id;
  return n;
}

NetworkGraph triangle(unsigned back_delay) {
  return graph_build({3},
                     {with_id(lif(3), 0), with_id(lif(3), 1), with_id(lif(3), 2)},
                     {{0, 1, 0}, {1, 2, 0}, {2, 0, back_delay}}, {0}, {2});
}

}  // namespace

TEST(Sequential, LinearThenLif) {
  const NetworkGraph g = sequential({4}, {linear(4, 3), lif(3)});
  EXPECT_EQ(g.nodes().size(), 2u);
  ASSERT_EQ(g.edges().size(), 1u);
  EXPECT_EQ(g.edges()[0], (Edge{0, 1, 0, false}));
  EXPECT_EQ(g.node(0).name, "linear0");
  EXPECT_EQ(g.node(1).name, "lif1");
  EXPECT_TRUE(g.node(1).stateful());
  EXPECT_FALSE(g.node(0).stateful());
  EXPECT_EQ(g.stateful_nodes(), (std::vector<NodeId>{1}));
}

TEST(Sequential, EmptyListIsAnError) {
  EXPECT_THROW(sequential({4}, {}), GraphError);
}

TEST(Sequential, ShapeMismatchNamesBothLayers) {
  try {
    sequential({4}, {linear(4, 3, true, "fc"), lif(5, {}, "spiking")});
    FAIL() << "expected GraphError";
  } catch (const GraphError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("fc"), std::string::npos) << msg;
    EXPECT_NE(msg.find("spiking"), std::string::npos) << msg;
  }
}

TEST(Sequential, ConvFiveLayerExample) {
  // conv 2->32 k7 s2 on 17x17 gives 32x6x6, so the readout sees 1152 inputs.
  const NetworkGraph g = sequential(
      {2, 17, 17}, {conv(2, 32, 7, 2, 0), lif(Shape{32, 6, 6}), flatten(), linear(1152, 11), lif(11)});
  EXPECT_EQ(g.out_shape(0), (Shape{32, 6, 6}));
  EXPECT_EQ(g.out_shape(2), (Shape{1152}));
  EXPECT_EQ(g.out_shape(4), (Shape{11}));
  EXPECT_EQ(topo_order(g), (std::vector<NodeId>{0, 1, 2, 3, 4}));
}

TEST(Sequential, LiteralListingShapesDoNotFit) {
  EXPECT_THROW(sequential({2, 17, 17}, {conv(2, 32, 7, 2, 0), lif(Shape{8, 8}), flatten(),
                                         linear(64, 11), lif(11)}),
               GraphError);
}

TEST(Sequential, EqualsExplicitChain) {
  const NetworkGraph a = sequential({4}, {linear(4, 3), lif(3), linear(3, 2), lif(2)}, 9);
  std::vector<LayerNode> nodes{with_id(linear(4, 3, true, "linear0"), 0),
                               with_id(lif(3, {}, "lif1"), 1),
                               with_id(linear(3, 2, true, "linear2"), 2),
                               with_id(lif(2, {}, "lif3"), 3)};
  const NetworkGraph b =
      graph_build({4}, nodes, {{0, 1, 0}, {1, 2, 0}, {2, 3, 0}}, {0}, {3}, 9);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.order(), b.order());
}

TEST(SequentialRecurrent, FeedbackBetweenLayers) {
  const NetworkGraph g = sequential_recurrent({3}, {lif(3), lif(3)}, {{1, 0}});
  std::size_t delayed = 0;
  for (const auto& e : g.edges()) delayed += e.delay;
  EXPECT_EQ(delayed, 1u);
  EXPECT_TRUE(g.has_delay_edges());
  EXPECT_EQ(g.delay_sources(), (std::vector<NodeId>{1}));
}

TEST(SequentialRecurrent, SelfFeedbackIsValid) {
  const NetworkGraph g = sequential_recurrent({3}, {lif(3)}, {{0, 0}});
  EXPECT_EQ(g.edges().size(), 1u);
  EXPECT_EQ(g.edges()[0], (Edge{0, 0, 1, false}));
}

TEST(SequentialRecurrent, ProjectionWhenShapesDiffer) {
  const NetworkGraph g =
      sequential_recurrent({4}, {linear(4, 6), lif(6), linear(6, 2), lif(2)}, {{3, 1}});
  const Edge& e = g.edges().back();
  EXPECT_TRUE(e.project);
  const auto specs = parameter_specs(g);
  const auto proj = std::find_if(specs.begin(), specs.end(),
                                 [&](const ParameterSpec& s) { return s.name == "lif3->lif1.weight"; });
  ASSERT_NE(proj, specs.end());
  EXPECT_EQ(proj->shape, (Shape{2, 6}));
}

TEST(SequentialRecurrent, MissingLayerIsAnError) {
  EXPECT_THROW(sequential_recurrent({3}, {lif(3), lif(3)}, {{1, 5}}), GraphError);
  EXPECT_THROW(sequential_recurrent({3}, {lif(3), lif(3)}, {{5, 0}}), GraphError);
}

TEST(GraphBuild, DelayZeroTriangleIsACycleWithWitness) {
  try {
    triangle(0);
    FAIL() << "expected GraphError";
  } catch (const GraphError& e) {
    std::vector<std::size_t> cycle = e.cycle();
    std::sort(cycle.begin(), cycle.end());
    EXPECT_EQ(cycle, (std::vector<std::size_t>{0, 1, 2}));
  }
}

TEST(GraphBuild, DelayedBackEdgeBreaksTheCycle) {
  const NetworkGraph g = triangle(1);
  EXPECT_EQ(topo_order(g), (std::vector<NodeId>{0, 1, 2}));
}

TEST(GraphBuild, ChainOrder) {
  const NetworkGraph g = graph_build(
      {2}, {with_id(lif(2), 7), with_id(lif(2), 3), with_id(lif(2), 5)}, {{7, 3, 0}, {3, 5, 0}},
      {7}, {5});
  EXPECT_EQ(topo_order(g), (std::vector<NodeId>{7, 3, 5}));
}

TEST(GraphBuild, DiamondOrderBreaksTiesById) {
  const NetworkGraph g = graph_build(
      {2}, {with_id(flatten(), 0), with_id(lif(2), 2), with_id(lif(2), 1), with_id(lif(2), 3)},
      {{0, 2, 0}, {0, 1, 0}, {1, 3, 0}, {2, 3, 0}}, {0}, {3});
  EXPECT_EQ(topo_order(g), (std::vector<NodeId>{0, 1, 2, 3}));
}

TEST(GraphBuild, DelayEdgesDoNotAffectOrder) {
  const std::vector<LayerNode> nodes{with_id(lif(2), 0), with_id(lif(2), 1), with_id(lif(2), 2)};
  const NetworkGraph plain = graph_build({2}, nodes, {{0, 1, 0}, {1, 2, 0}}, {0}, {2});
  const NetworkGraph back =
      graph_build({2}, nodes, {{0, 1, 0}, {1, 2, 0}, {2, 0, 1}, {2, 1, 1}}, {0}, {2});
  EXPECT_EQ(plain.order(), back.order());
}

TEST(GraphBuild, BadEdgesAndIds) {
  const std::vector<LayerNode> nodes{with_id(lif(2), 0), with_id(lif(2), 1)};
  EXPECT_THROW(graph_build({2}, nodes, {{0, 4, 0}}, {0}, {1}), GraphError);
  EXPECT_THROW(graph_build({2}, nodes, {{0, 1, 2}}, {0}, {1}), GraphError);
  EXPECT_THROW(graph_build({2}, {with_id(lif(2), 0), with_id(lif(2), 0)}, {}, {0}, {0}),
               GraphError);
  EXPECT_THROW(graph_build({2}, nodes, {{0, 1, 0}}, {}, {1}), GraphError);
  EXPECT_THROW(graph_build({2}, nodes, {{0, 1, 0}}, {0}, {9}), GraphError);
  EXPECT_THROW(graph_build({2}, {}, {}, {0}, {0}), GraphError);
}

TEST(GraphBuild, UnreachableNodeIsOnlyADiagnostic) {
  const NetworkGraph g = graph_build({2}, {with_id(lif(2), 0), with_id(lif(2), 1)},
                                     {{0, 1, 0}, {1, 1, 1}, {0, 0, 1}}, {0}, {1});
  EXPECT_TRUE(g.diagnostics().empty());
  const NetworkGraph h = graph_build(
      {2}, {with_id(lif(2), 0), with_id(lif(2), 1), with_id(linear(2, 2), 2)},
      {{0, 1, 0}, {2, 1, 0}}, {0}, {1});
  ASSERT_EQ(h.diagnostics().size(), 1u);
  EXPECT_NE(h.diagnostics()[0].find("linear2"), std::string::npos);
}

TEST(GraphBuild, ProjectionOnlyOntoVectors) {
  const std::vector<LayerNode> nodes{with_id(conv(1, 2, 3, 1, 1), 0), with_id(lif(Shape{2, 4, 4}), 1)};
  EXPECT_THROW(graph_build({1, 4, 4}, nodes, {{0, 1, 0}, {1, 0, 1, true}}, {0}, {1}), GraphError);
}

TEST(GraphBuild, DiamondMergesBySummation) {
  const NetworkGraph g = graph_build(
      {2},
      {with_id(flatten(), 0), with_id(linear(2, 2, false), 1), with_id(linear(2, 2, false), 2),
       with_id(lif(2, LIFParams{0.5, 0.5, 100.0}), 3)},
      {{0, 1, 0}, {0, 2, 0}, {1, 3, 0}, {2, 3, 0}}, {0}, {3});
  ParameterSet<double> params = init_parameters<double>(g);
  params["linear1.weight"] = D::matrix({{1, 2}, {3, 4}});
  params["linear2.weight"] = D::matrix({{-1, 0}, {0.5, 1}});
  const D input({2, 2}, {1, 0, 2, 1});
  const auto r = run(g, params, ExecutionPlan{}, input,
                     init_states<double>(g, StateInit::zeros(), 0), RunOptions{true});

  // x W1 + x W2 with W1 + W2 = [[0, 2], [3.5, 5]]; then the LIF current and
  // membrane with alpha = beta = 0.5 and no spikes.
  const double i1[2] = {0, 2};
  const double i2[2] = {0.5 * i1[0] + 2 * 0 + 1 * 3.5, 0.5 * i1[1] + 2 * 2 + 1 * 5};
  const double u2[2] = {0.5 * i1[0] + i2[0], 0.5 * i1[1] + i2[1]};
  const auto& st = r.final_states.at(3);
  EXPECT_DOUBLE_EQ(st.I[0], i2[0]);
  EXPECT_DOUBLE_EQ(st.I[1], i2[1]);
  EXPECT_DOUBLE_EQ(st.U[0], u2[0]);
  EXPECT_DOUBLE_EQ(st.U[1], u2[1]);
  const D& merged = r.record.hidden.at(1);
  EXPECT_DOUBLE_EQ(merged[0], 1.0);
  EXPECT_DOUBLE_EQ(merged[1], 2.0);
}

TEST(GraphBuild, Deterministic) {
  const auto make = [] {
    return sequential_recurrent({4}, {linear(4, 6), lif(6), linear(6, 2), lif(2)},
                                {{3, 1}, {1, 1}}, 5);
  };
  const NetworkGraph a = make();
  const NetworkGraph b = make();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.order(), b.order());
  const auto pa = init_parameters<double>(a);
  const auto pb = init_parameters<double>(b);
  for (const auto& [name, t] : pa) EXPECT_TRUE(bitwise_equal(t, pb.at(name))) << name;
}

// Random DAGs plus random delayed back edges always build and yield an order
// that respects every delay-0 edge.
TEST(GraphBuild, AcceptedGraphsHaveSchedules) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 6;
    std::vector<NodeId> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    std::shuffle(ids.begin(), ids.end(), rng);
    std::vector<LayerNode> nodes;
    for (NodeId id : ids) nodes.push_back(with_id(lif(3), id));
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (rng() % 3 != 0) continue;
        if (i < j) edges.push_back({ids[i], ids[j], 0});
        else edges.push_back({ids[i], ids[j], 1});
      }
    }
    const NetworkGraph g = graph_build({3}, nodes, edges, {ids[0]}, {ids[n - 1]});
    const auto order = topo_order(g);
    ASSERT_EQ(order.size(), n);
    const auto pos = [&](NodeId id) { return std::find(order.begin(), order.end(), id) - order.begin(); };
    for (const auto& e : edges) {
      if (e.delay == 0) EXPECT_LT(pos(e.src), pos(e.dst));
    }
  }
}

TEST(SmoothTwin, SwitchesEveryLif) {
  const NetworkGraph g = smooth_twin(make_lif_mlp(3, {4, 2}), 5.0);
  for (const auto& n : g.nodes()) {
    if (const auto* l = std::get_if<LifLayer>(&n.kind)) EXPECT_EQ(l->smooth_sharpness, 5.0);
  }
}

TEST(Parameters, SpecsAndInit) {
  const NetworkGraph g = make_lif_mlp(3, {4, 2}, {}, 1);
  const auto specs = parameter_specs(g);
  ASSERT_EQ(specs.size(), 4u);
  EXPECT_EQ(specs[0].name, "fc1.weight");
  EXPECT_EQ(specs[0].shape, (Shape{3, 4}));
  EXPECT_EQ(specs[1].name, "fc1.bias");
  const auto p = init_parameters<double>(g);
  const double bound = 1.0 / std::sqrt(3.0);
  for (double v : p.at("fc1.weight").data()) EXPECT_LE(std::abs(v), bound);
  EXPECT_EQ(parameter_count(p), 3u * 4 + 4 + 4 * 2 + 2);
  auto bad = p;
  bad.erase("fc1.bias");
  EXPECT_THROW(check_parameters(g, bad), ValidationError);
  bad = p;
  bad["fc1.bias"] = D({5});
  EXPECT_THROW(check_parameters(g, bad), ValidationError);
}

TEST(GraphJson, RoundTrip) {
  LIFParams p;
  p.reset = ResetMode::to_zero;
  p.surrogate = Surrogate{SurrogateKind::arctan, 3.0};
  const NetworkGraph g = sequential_recurrent(
      {1, 6, 6}, {conv(1, 2, 3, 1, 1), lif(Shape{2, 6, 6}, p), flatten(), linear(72, 3), lif(3)},
      {{4, 3}}, 77);
  const NetworkGraph back = graph_from_json(graph_to_json(g));
  EXPECT_EQ(back, g);
  EXPECT_EQ(graph_to_json(back), graph_to_json(g));
}

TEST(GraphJson, ModelRoundTripKeepsParameters) {
  Model<double> m = make_model<double>(make_lif_mlp(3, {4, 2}, {}, 3));
  m.params["fc1.bias"].mutable_data()[0] = 0.1234567890123;
  const Model<double> back = model_from_json<double>(model_to_json(m));
  EXPECT_EQ(back.graph, m.graph);
  for (const auto& [name, t] : m.params) EXPECT_TRUE(bitwise_equal(t, back.params.at(name))) << name;
}

TEST(GraphJson, RejectsMalformedDocuments) {
  const std::string good = graph_to_json(make_lif_mlp(2, {2}));
  EXPECT_NO_THROW(graph_from_json(good));
  EXPECT_THROW(graph_from_json("{"), ValidationError);
  EXPECT_THROW(graph_from_json("[]"), ValidationError);

  auto replace = [&](const std::string& from, const std::string& to) {
    std::string s = good;
    const auto at = s.find(from);
    EXPECT_NE(at, std::string::npos) << from;
    return s.replace(at, from.size(), to);
  };
  EXPECT_THROW(graph_from_json(replace("\"version\": 1", "\"version\": 2")), ValidationError);
  EXPECT_THROW(graph_from_json(replace("\"version\": 1", "\"version\": 1, \"extra\": 0")),
               ValidationError);
  EXPECT_THROW(graph_from_json(replace("\"lif\"", "\"relu\"")), ValidationError);
}

TEST(GraphJson, CycleErrorSurvivesParsing) {
  const std::string doc = R"({"version": 1, "input_shape": [2], "seed": 0,
    "nodes": [{"id": 0, "name": "a", "kind": "lif", "shape": [2]},
              {"id": 1, "name": "b", "kind": "lif", "shape": [2]}],
    "edges": [{"src": 0, "dst": 1, "delay": 0}, {"src": 1, "dst": 0, "delay": 0}],
    "inputs": [0], "outputs": [1]})";
  try {
    graph_from_json(doc);
    FAIL() << "expected GraphError";
  } catch (const GraphError& e) {
    EXPECT_EQ(e.cycle().size(), 2u);
  }
}
