#include "sadarts/topology.hpp"

#include "sadarts/errors.hpp"
#include "sadarts/ops_catalog.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace sadarts {

std::vector<int> CellTopology::searchable_edges() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].searchable()) out.push_back(int(i));
  }
  return out;
}

int CellTopology::num_searchable() const { return int(searchable_edges().size()); }

std::vector<int> CellTopology::incoming(int node) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].dst == node) out.push_back(int(i));
  }
  return out;
}

std::vector<int> CellTopology::intermediate_nodes() const {
  std::vector<int> out;
  for (int n = num_inputs; n < num_nodes; ++n) {
    if (!incoming(n).empty()) out.push_back(n);
  }
  return out;
}

int CellTopology::output_node() const { return num_nodes - 1; }

int CellTopology::candidate_index(const std::string& op) const {
  auto it = std::find(candidates.begin(), candidates.end(), op);
  if (it == candidates.end()) return -1;
  return int(it - candidates.begin());
}

void CellTopology::validate() const {
  if (num_inputs < 1 || num_nodes <= num_inputs) throw ContractError("topology: bad node counts");
  if (candidates.empty()) throw ContractError("topology: empty candidate list");
  for (const auto& c : candidates) {
    if (!in_catalog(c)) throw CatalogError("unknown operation '" + c + "'");
  }
  for (const CellEdge& e : edges) {
    if (e.src < 0 || e.dst >= num_nodes || e.src >= e.dst) {
      throw ContractError("topology: edge (" + std::to_string(e.src) + "," + std::to_string(e.dst) +
                          ") does not go from a lower to a higher node");
    }
    if (e.dst < num_inputs) throw ContractError("topology: edge into an input node");
    if (e.fixed_op && !in_catalog(*e.fixed_op)) throw CatalogError("unknown operation '" + *e.fixed_op + "'");
  }
  if (searchable_edges().empty()) throw ContractError("topology: no searchable edge");
}

namespace {

CellTopology nb201_graph(std::string space, std::vector<std::string> candidates) {
  CellTopology t;
  t.space = std::move(space);
  t.num_nodes = 4;
  t.num_inputs = 1;
  t.edges = {{0, 1, {}}, {0, 2, {}}, {1, 2, {}}, {0, 3, {}}, {1, 3, {}}, {2, 3, {}}};
  t.candidates = std::move(candidates);
  return t;
}

}  // namespace

const std::vector<std::string>& space_names() {
  static const std::vector<std::string> names = {"darts", "nb201", "reduced", "micro", "edge"};
  return names;
}

CellTopology make_topology(const std::string& space) {
  if (space == "darts") {
    CellTopology t;
    t.space = space;
    t.num_nodes = 7;
    t.num_inputs = 2;
    for (int dst = 2; dst < 6; ++dst) {
      for (int src = 0; src < dst; ++src) t.edges.push_back({src, dst, {}});
    }
    t.candidates = {"none",        "max_pool3x3", "avg_pool3x3", "skip_connect",
                    "sep_conv3x3", "sep_conv5x5", "dil_conv3x3", "dil_conv5x5"};
    t.concat_output = true;
    t.keep_per_node = 2;
    return t;
  }
  if (space == "nb201") return nb201_graph(space, {"none", "skip_connect", "conv1x1", "conv3x3", "avg_pool3x3"});
  if (space == "reduced") return nb201_graph(space, {"sep_conv3x3", "skip_connect", "avg_pool3x3"});
  if (space == "micro") {
    CellTopology t = nb201_graph(space, {"conv3x3", "skip_connect", "avg_pool3x3"});
    for (CellEdge& e : t.edges) {
      if (e.dst != e.src + 1) e.fixed_op = "skip_connect";
    }
    return t;
  }
  if (space == "edge") {
    CellTopology t;
    t.space = space;
    t.num_nodes = 2;
    t.edges = {{0, 1, {}}};
    t.candidates = {"none", "skip_connect", "conv1x1", "conv3x3", "avg_pool3x3"};
    return t;
  }
  throw ContractError("unknown search space '" + space + "'");
}

std::string Genotype::canonical() const {
  auto join = [](const std::vector<GenotypeEdge>& edges) {
    std::ostringstream os;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      os << (i ? "|" : "") << edges[i].src << '-' << edges[i].dst << ':' << edges[i].op;
    }
    return os.str();
  };
  std::string s = join(normal);
  if (!reduce.empty()) s = "normal=" + s + ";reduce=" + join(reduce);
  return s;
}

std::string genotype_to_json(const Genotype& g) {
  auto encode = [](const std::vector<GenotypeEdge>& edges) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : edges) arr.push_back({e.src, e.dst, e.op});
    return arr;
  };
  nlohmann::json j;
  j["space"] = g.space;
  j["normal"] = encode(g.normal);
  j["reduce"] = encode(g.reduce);
  return j.dump(2);
}

Genotype genotype_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("genotype: invalid JSON: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() != "space" && it.key() != "normal" && it.key() != "reduce") {
      throw SchemaError("genotype: unknown field '" + it.key() + "'");
    }
  }
  auto decode = [](const nlohmann::json& arr) {
    std::vector<GenotypeEdge> out;
    for (const auto& e : arr) {
      if (!e.is_array() || e.size() != 3) throw SchemaError("genotype: edges must be [src, dst, op]");
      out.push_back({e[0].get<int>(), e[1].get<int>(), e[2].get<std::string>()});
    }
    return out;
  };
  try {
    Genotype g;
    g.space = j.at("space").get<std::string>();
    g.normal = decode(j.at("normal"));
    if (j.contains("reduce")) g.reduce = decode(j.at("reduce"));
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("genotype: ") + e.what());
  }
}

namespace {

void validate_cell_genes(const std::vector<GenotypeEdge>& genes, const CellTopology& topo, const char* which) {
  const std::string tag = std::string("genotype (") + which + "): ";
  std::set<std::pair<int, int>> searchable;
  for (int e : topo.searchable_edges()) searchable.insert({topo.edges[std::size_t(e)].src, topo.edges[std::size_t(e)].dst});
  std::map<int, int> kept_per_node;
  std::set<std::pair<int, int>> seen;
  for (const auto& g : genes) {
    if (!searchable.count({g.src, g.dst})) {
      throw ContractError(tag + "edge " + std::to_string(g.src) + "-" + std::to_string(g.dst) + " is not searchable");
    }
    if (!seen.insert({g.src, g.dst}).second) throw ContractError(tag + "duplicate edge");
    if (!in_catalog(g.op)) throw CatalogError("unknown operation '" + g.op + "'");
    if (topo.candidate_index(g.op) < 0) throw ContractError(tag + "op '" + g.op + "' is not a candidate of this space");
    ++kept_per_node[g.dst];
  }
  if (topo.keep_per_node == 0) {
    if (seen.size() != searchable.size()) throw ContractError(tag + "every searchable edge must be listed");
    return;
  }
  for (int node : topo.intermediate_nodes()) {
    if (kept_per_node[node] != topo.keep_per_node) {
      throw ContractError(tag + "node " + std::to_string(node) + " keeps " + std::to_string(kept_per_node[node]) +
                          " edges, expected " + std::to_string(topo.keep_per_node));
    }
  }
}

}  // namespace

void validate_genotype(const Genotype& g, const CellTopology& topo, bool has_reduce) {
  if (g.space != topo.space) throw ContractError("genotype space '" + g.space + "' != topology '" + topo.space + "'");
  validate_cell_genes(g.normal, topo, "normal");
  if (has_reduce) {
    validate_cell_genes(g.reduce, topo, "reduce");
  } else if (!g.reduce.empty()) {
    throw ContractError("genotype lists reduction edges but the network has no reduction cell");
  }
}

std::vector<Genotype> enumerate_genotypes(const CellTopology& topo) {
  if (topo.keep_per_node != 0) throw ContractError("enumerate_genotypes: only keep-all topologies are enumerable");
  const auto edges = topo.searchable_edges();
  const std::size_t n_ops = topo.candidates.size();
  std::vector<std::size_t> digits(edges.size(), 0);
  std::vector<Genotype> out;
  while (true) {
    Genotype g;
    g.space = topo.space;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const CellEdge& e = topo.edges[std::size_t(edges[i])];
      g.normal.push_back({e.src, e.dst, topo.candidates[digits[i]]});
    }
    out.push_back(std::move(g));
    std::size_t pos = edges.size();
    while (pos > 0) {
      --pos;
      if (++digits[pos] < n_ops) break;
      digits[pos] = 0;
      if (pos == 0) return out;
    }
    if (edges.empty()) return out;
  }
}

}  // namespace sadarts
