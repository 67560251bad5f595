#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "tgnn/error.hpp"
#include "tgnn/graph.hpp"

namespace tgnn {
namespace {

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.precision(17);
  return out;
}

bool skip_line(const std::string& line) {
  const auto p = line.find_first_not_of(" \t\r");
  return p == std::string::npos || line[p] == '#';
}

std::vector<std::string> split_fields(const std::string& line, const char* seps) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    const auto next = line.find_first_of(seps, pos);
    auto field = line.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    const auto b = field.find_first_not_of(" \t\r");
    const auto e = field.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && errno != ERANGE;
}

bool parse_int(const std::string& s, long long& out) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  out = std::strtoll(s.c_str(), &end, 10);
  return end == s.c_str() + s.size() && errno != ERANGE;
}

}  // namespace

std::vector<Edge> read_edge_list(const std::string& path) {
  auto in = open_in(path);
  std::vector<Edge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    std::istringstream ss(line);
    std::string a, b, extra;
    ss >> a >> b;
    long long s = 0, d = 0;
    if (!parse_int(a, s) || !parse_int(b, d)) throw ParseError(path, lineno, "expected 'src<TAB>dst'");
    if (ss >> extra) throw ParseError(path, lineno, "unexpected trailing field '" + extra + "'");
    if (s < 0 || d < 0) throw ParseError(path, lineno, "node ids must be non-negative");
    edges.emplace_back(static_cast<NodeId>(s), static_cast<NodeId>(d));
  }
  return edges;
}

Matrix read_features_csv(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    const auto fields = split_fields(line, ",");
    std::vector<double> row(fields.size());
    bool ok = true;
    for (std::size_t i = 0; i < fields.size() && ok; ++i) ok = parse_double(fields[i], row[i]);
    if (!ok) {
      if (first) {  // header row
        first = false;
        continue;
      }
      throw ParseError(path, lineno, "non-numeric feature value");
    }
    first = false;
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(path, lineno,
                       "expected " + std::to_string(rows.front().size()) + " columns, got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError(path, lineno, "no feature rows");
  Matrix x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return x;
}

std::vector<int> read_labels_csv(const std::string& path, std::size_t n) {
  auto in = open_in(path);
  std::vector<int> labels(n, -1);
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    const auto fields = split_fields(line, ",");
    long long node = 0, label = 0;
    if (fields.size() != 2 || !parse_int(fields[0], node) || !parse_int(fields[1], label)) {
      if (first) {
        first = false;
        continue;
      }
      throw ParseError(path, lineno, "expected 'node,label'");
    }
    first = false;
    if (node < 0 || static_cast<std::size_t>(node) >= n)
      throw ParseError(path, lineno, "node " + std::to_string(node) + " out of range");
    if (label < 0) throw ParseError(path, lineno, "labels must be non-negative");
    if (labels[static_cast<std::size_t>(node)] >= 0)
      throw ParseError(path, lineno, "duplicate label for node " + std::to_string(node));
    labels[static_cast<std::size_t>(node)] = static_cast<int>(label);
  }
  for (std::size_t v = 0; v < n; ++v)
    if (labels[v] < 0) throw ParseError(path, lineno, "missing label for node " + std::to_string(v));
  return labels;
}

Split read_splits(const std::string& path) {
  auto in = open_in(path);
  std::vector<std::vector<NodeId>> parts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    if (parts.size() == 3) throw ParseError(path, lineno, "more than three split lines");
    std::istringstream ss(line);
    std::vector<NodeId> ids;
    std::string tok;
    while (ss >> tok) {
      long long id = 0;
      if (!parse_int(tok, id) || id < 0) throw ParseError(path, lineno, "invalid node id '" + tok + "'");
      ids.push_back(static_cast<NodeId>(id));
    }
    parts.push_back(std::move(ids));
  }
  if (parts.size() != 3) throw ParseError(path, lineno, "expected three lines (train, val, test)");
  return Split{std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

Graph load_graph(const std::string& edges, const std::string& features, const std::string& labels,
                 const std::string& splits) {
  Matrix x = read_features_csv(features);
  const auto n = static_cast<std::size_t>(x.rows());
  const auto edge_list = read_edge_list(edges);
  for (const auto& [s, d] : edge_list)
    if (static_cast<std::size_t>(s) >= n || static_cast<std::size_t>(d) >= n)
      throw InvalidArgument("edge (" + std::to_string(s) + ", " + std::to_string(d) + ") in '" + edges +
                            "' refers to a node beyond the " + std::to_string(n) + " feature rows");
  Graph g = Graph::from_edges(n, edge_list, true);
  g.features = std::move(x);
  if (!labels.empty()) g.labels = read_labels_csv(labels, n);
  if (!splits.empty()) g.split = read_splits(splits);
  g.validate();
  return g;
}

void save_graph(const Graph& g, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir + "': " + ec.message());
  const std::filesystem::path base(dir);

  auto edges = open_out((base / "edges.tsv").string());
  for (std::size_t v = 0; v < g.num_nodes(); ++v)
    for (auto u : g.neighbors(static_cast<NodeId>(v)))
      if (static_cast<std::size_t>(u) > v) edges << v << '\t' << u << '\n';

  auto feats = open_out((base / "features.csv").string());
  for (Eigen::Index r = 0; r < g.features.rows(); ++r) {
    for (Eigen::Index c = 0; c < g.features.cols(); ++c) feats << (c ? "," : "") << g.features(r, c);
    feats << '\n';
  }

  auto labels = open_out((base / "labels.csv").string());
  labels << "node,label\n";
  for (std::size_t v = 0; v < g.labels.size(); ++v) labels << v << ',' << g.labels[v] << '\n';

  auto splits = open_out((base / "splits.txt").string());
  for (const auto* part : {&g.split.train, &g.split.val, &g.split.test}) {
    for (std::size_t i = 0; i < part->size(); ++i) splits << (i ? " " : "") << (*part)[i];
    splits << '\n';
  }
  if (!edges || !feats || !labels || !splits) throw IoError("failed writing graph files in '" + dir + "'");
}

std::vector<GraphSample> read_graph_dataset(const std::string& path) {
  auto in = open_in(path);
  std::vector<GraphSample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (skip_line(line)) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto& feats = j.at("features");
      if (!feats.is_array() || feats.empty()) throw ParseError(path, lineno, "'features' must be a non-empty array");
      const auto n = feats.size();
      const auto f = feats.at(0).size();
      Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
      for (std::size_t r = 0; r < n; ++r) {
        if (feats[r].size() != f) throw ParseError(path, lineno, "ragged feature rows");
        for (std::size_t c = 0; c < f; ++c)
          x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = feats[r][c].get<double>();
      }
      std::vector<Edge> edges;
      for (const auto& e : j.at("edges")) {
        if (e.size() != 2) throw ParseError(path, lineno, "edges must be [src, dst] pairs");
        const auto s = e[0].get<long long>(), d = e[1].get<long long>();
        if (s < 0 || d < 0 || static_cast<std::size_t>(s) >= n || static_cast<std::size_t>(d) >= n)
          throw ParseError(path, lineno, "edge endpoint out of range");
        edges.emplace_back(static_cast<NodeId>(s), static_cast<NodeId>(d));
      }
      const auto t = j.at("target").get<std::vector<double>>();
      if (t.empty()) throw ParseError(path, lineno, "'target' must be non-empty");
      GraphSample s{Graph::from_edges(n, edges, true), Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size()))};
      s.graph.features = std::move(x);
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path, lineno, e.what());
    }
  }
  if (out.empty()) throw ParseError(path, lineno, "no graphs");
  const auto f = out.front().graph.feature_dim();
  const auto tdim = out.front().target.size();
  for (const auto& s : out)
    if (s.graph.feature_dim() != f || s.target.size() != tdim)
      throw InvalidArgument("graphs in '" + path + "' disagree on feature or target dimension");
  return out;
}

void write_graph_dataset(const std::vector<GraphSample>& graphs, const std::string& path) {
  auto out = open_out(path);
  for (const auto& s : graphs) {
    nlohmann::json j;
    j["edges"] = nlohmann::json::array();
    for (std::size_t v = 0; v < s.graph.num_nodes(); ++v)
      for (auto u : s.graph.neighbors(static_cast<NodeId>(v)))
        if (static_cast<std::size_t>(u) > v) j["edges"].push_back({static_cast<long long>(v), static_cast<long long>(u)});
    j["features"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < s.graph.features.rows(); ++r) {
      std::vector<double> row(s.graph.features.row(r).begin(), s.graph.features.row(r).end());
      j["features"].push_back(row);
    }
    j["target"] = std::vector<double>(s.target.begin(), s.target.end());
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace tgnn
