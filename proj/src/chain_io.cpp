#include "treelcm/chain_io.hpp"

#include <fstream>

#include "treelcm/error.hpp"

namespace treelcm {

using nlohmann::json;

namespace {

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

template <typename T>
T field(const json& j, const char* name) {
  if (!j.contains(name)) throw Error("schema", std::string("missing field '") + name + "'");
  try {
    return j.at(name).get<T>();
  } catch (const json::exception& e) {
    throw Error("schema", std::string("field '") + name + "': " + e.what());
  }
}

}  // namespace

json snapshot_to_json(const Snapshot& s) {
  json theta = json::array();
  for (int k = 0; k < s.theta.rows(); ++k) theta.push_back(vector_json(s.theta.row(k).transpose()));
  std::vector<int> z(s.z);
  for (int& k : z) ++k;
  return json{{"iteration", s.iteration},
              {"tree", s.tree},
              {"theta", theta},
              {"pi", vector_json(s.pi)},
              {"sigma2", vector_json(s.sigma2)},
              {"c", s.c},
              {"z", z},
              {"log_posterior", s.log_posterior},
              {"topology_accepted", s.topology_accepted}};
}

Snapshot snapshot_from_json(const json& j) {
  Snapshot s;
  s.iteration = field<int>(j, "iteration");
  s.tree = field<std::string>(j, "tree");
  const auto rows = field<std::vector<std::vector<double>>>(j, "theta");
  const int K = static_cast<int>(rows.size());
  const int J = K ? static_cast<int>(rows.front().size()) : 0;
  s.theta.resize(K, J);
  for (int k = 0; k < K; ++k) {
    if (static_cast<int>(rows[k].size()) != J) throw Error("schema", "ragged theta");
    for (int c = 0; c < J; ++c) s.theta(k, c) = rows[k][c];
  }
  if (!j.contains("pi") || !j.contains("sigma2")) throw Error("schema", "snapshot lacks pi or sigma2");
  s.pi = vector_from(j.at("pi"));
  s.sigma2 = vector_from(j.at("sigma2"));
  s.c = field<double>(j, "c");
  s.z = field<std::vector<int>>(j, "z");
  for (int& k : s.z) {
    if (k < 1 || k > K) throw Error("schema", "membership out of range");
    --k;
  }
  s.log_posterior = field<double>(j, "log_posterior");
  s.topology_accepted = field<bool>(j, "topology_accepted");
  return s;
}

json meta_to_json(const ChainMeta& m) {
  std::vector<std::vector<int>> groups(m.G);
  for (std::size_t j = 0; j < m.item_groups.size(); ++j) groups.at(m.item_groups[j]).push_back(static_cast<int>(j) + 1);
  return json{{"schema_version", kSchemaVersion},
              {"N", m.N},
              {"J", m.J},
              {"G", m.G},
              {"K", m.K},
              {"total_iters", m.total_iters},
              {"seed", m.seed},
              {"wall_time_seconds", m.wall_time_seconds},
              {"hyperparameters",
               {{"pi_dirichlet_alpha", m.hyper.dirichlet_alpha},
                {"sigma2_inverse_gamma_shape", m.hyper.sigma_shape},
                {"sigma2_inverse_gamma_rate", m.hyper.sigma_rate},
                {"c_gamma_shape", m.hyper.c_shape},
                {"c_gamma_rate", m.hyper.c_rate}}},
              {"topology_moves", m.topology_moves},
              {"fix_c", m.fix_c},
              {"location_update", m.location_update},
              {"model_choices",
               {{"divergence_function", "a(t) = c / (1 - t)"},
                {"link", "logistic"},
                {"topology_proposal", "prune subtree, regraft along a DDT path through the remnant"},
                {"augmentation", "Polya-Gamma PG(1, eta)"}}},
              {"item_labels", m.item_labels},
              {"group_names", m.group_names},
              {"groups", groups},
              {"topology_accepted", m.topology_accepted},
              {"topology_attempted", m.topology_attempted}};
}

ChainMeta meta_from_json(const json& j) {
  if (field<int>(j, "schema_version") != kSchemaVersion) throw Error("schema", "unsupported meta schema_version");
  ChainMeta m;
  m.N = field<int>(j, "N");
  m.J = field<int>(j, "J");
  m.G = field<int>(j, "G");
  m.K = field<int>(j, "K");
  m.total_iters = field<int>(j, "total_iters");
  m.seed = field<std::uint64_t>(j, "seed");
  m.wall_time_seconds = field<double>(j, "wall_time_seconds");
  const json& h = j.at("hyperparameters");
  m.hyper.dirichlet_alpha = field<double>(h, "pi_dirichlet_alpha");
  m.hyper.sigma_shape = field<double>(h, "sigma2_inverse_gamma_shape");
  m.hyper.sigma_rate = field<double>(h, "sigma2_inverse_gamma_rate");
  m.hyper.c_shape = field<double>(h, "c_gamma_shape");
  m.hyper.c_rate = field<double>(h, "c_gamma_rate");
  m.topology_moves = field<int>(j, "topology_moves");
  m.fix_c = field<bool>(j, "fix_c");
  m.location_update = field<std::string>(j, "location_update");
  m.item_labels = field<std::vector<std::string>>(j, "item_labels");
  m.group_names = field<std::vector<std::string>>(j, "group_names");
  const auto groups = field<std::vector<std::vector<int>>>(j, "groups");
  m.item_groups.assign(m.J, -1);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (int item : groups[g]) {
      if (item < 1 || item > m.J) throw Error("schema", "group item index out of range");
      m.item_groups[item - 1] = static_cast<int>(g);
    }
  m.topology_accepted = field<int>(j, "topology_accepted");
  m.topology_attempted = field<int>(j, "topology_attempted");
  return m;
}

void write_chain(const std::filesystem::path& dir, const PosteriorChain& chain) {
  std::filesystem::create_directories(dir);
  std::ofstream lines(dir / "chain.jsonl");
  std::ofstream trees(dir / "trees.nwk");
  for (const auto& s : chain.snapshots) {
    lines << snapshot_to_json(s).dump() << '\n';
    trees << s.tree << '\n';
  }
  std::ofstream(dir / "meta.json") << meta_to_json(chain.meta).dump(2) << '\n';
  if (!lines || !trees) throw Error("io", "failed writing chain to " + dir.string());
}

PosteriorChain read_chain(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw Error("io", "cannot open " + (dir / "meta.json").string());
  PosteriorChain chain;
  try {
    chain.meta = meta_from_json(json::parse(meta_in));
  } catch (const json::exception& e) {
    throw Error("schema", std::string("meta.json: ") + e.what());
  }
  std::ifstream lines(dir / "chain.jsonl");
  if (!lines) throw Error("io", "cannot open " + (dir / "chain.jsonl").string());
  std::string line;
  int number = 0;
  while (std::getline(lines, line)) {
    ++number;
    if (line.empty()) continue;
    try {
      chain.snapshots.push_back(snapshot_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error("schema", "chain.jsonl line " + std::to_string(number) + ": " + e.what());
    }
  }
  return chain;
}

}  // namespace treelcm
