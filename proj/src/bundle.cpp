#include "treelcm/bundle.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "treelcm/chain_io.hpp"
#include "treelcm/error.hpp"

namespace treelcm {

using nlohmann::json;

namespace {

const json& require(const json& j, const std::string& parent, const std::string& name) {
  if (!j.is_object() || !j.contains(name)) throw Error("schema", "missing field '" + parent + name + "'");
  return j.at(name);
}

template <typename T>
T as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw Error("schema", "field '" + path + "' has the wrong type");
  }
}

void check_version(const json& j) {
  if (j.contains("schema_version") && as<int>(j.at("schema_version"), "schema_version") != kSchemaVersion)
    throw Error("schema", "unsupported schema_version");
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> from_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') cell = cell.substr(1, cell.size() - 2);
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

ItemCatalog catalog_from_json(const json& j) {
  check_version(j);
  ItemCatalog out;
  out.item_labels = as<std::vector<std::string>>(require(j, "", "item_labels"), "item_labels");
  const int J = out.item_count();
  if (J == 0) throw Error("schema", "field 'item_labels' is empty");
  if (std::set<std::string>(out.item_labels.begin(), out.item_labels.end()).size() != out.item_labels.size())
    throw Error("schema", "field 'item_labels' has duplicates");

  const json& groups = require(j, "", "groups");
  if (!groups.is_array() || groups.empty()) throw Error("schema", "field 'groups' must be a nonempty array");
  std::vector<std::vector<int>> sets;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::string at = "groups[" + std::to_string(g) + "].";
    out.group_names.push_back(as<std::string>(require(groups[g], at, "name"), at + "name"));
    auto items = as<std::vector<int>>(require(groups[g], at, "items"), at + "items");
    for (int& item : items) {
      if (item < 1 || item > J) throw Error("schema", "field '" + at + "items' has index out of 1.." + std::to_string(J));
      --item;
    }
    sets.push_back(std::move(items));
  }
  if (std::set<std::string>(out.group_names.begin(), out.group_names.end()).size() != out.group_names.size())
    throw Error("schema", "field 'groups' has duplicate names");
  try {
    out.grouping = ItemGrouping::from_sets(sets, J);
  } catch (const Error& e) {
    throw Error("schema", std::string("field 'groups': ") + e.what());
  }
  return out;
}

json catalog_to_json(const ItemCatalog& c) {
  json groups = json::array();
  for (int g = 0; g < c.grouping.group_count(); ++g) {
    std::vector<int> items(c.grouping.items(g));
    for (int& item : items) ++item;
    groups.push_back(json{{"name", c.group_names.at(g)}, {"items", items}});
  }
  return json{{"schema_version", kSchemaVersion}, {"item_labels", c.item_labels}, {"groups", groups}};
}

ItemCatalog single_group_catalog(std::vector<std::string> item_labels) {
  ItemCatalog out;
  out.grouping = ItemGrouping(std::vector<int>(item_labels.size(), 0));
  out.item_labels = std::move(item_labels);
  out.group_names = {"all"};
  return out;
}

ParameterBundle bundle_from_json(const json& j) {
  ParameterBundle out;
  out.catalog = catalog_from_json(j);
  const int J = out.catalog.item_count();
  const int G = out.catalog.grouping.group_count();

  try {
    out.tree = parse_newick(as<std::string>(require(j, "", "tree"), "tree"));
  } catch (const Error& e) {
    if (e.code() == "schema") throw;
    throw Error("schema", std::string("field 'tree': ") + e.what());
  }
  const int K = out.tree.leaf_count();

  out.class_probability = to_vector(as<std::vector<double>>(require(j, "", "class_probability"), "class_probability"));
  if (out.class_probability.size() != K)
    throw Error("schema", "field 'class_probability' needs " + std::to_string(K) + " entries, one per tree leaf");
  try {
    check_class_probability(out.class_probability);
  } catch (const Error& e) {
    throw Error("schema", std::string("field 'class_probability': ") + e.what());
  }
  const auto leaves = out.tree.class_leaves();
  for (int k = 0; k < K; ++k)
    if (out.tree.label(leaves[k]) != "v" + std::to_string(k + 1))
      throw Error("schema", "field 'tree': leaves must be labeled v1..v" + std::to_string(K));

  out.sigma_by_group = to_vector(as<std::vector<double>>(require(j, "", "Sigma_by_group"), "Sigma_by_group"));
  if (out.sigma_by_group.size() != G)
    throw Error("schema", "field 'Sigma_by_group' needs " + std::to_string(G) + " entries, one per group");
  for (double v : out.sigma_by_group)
    if (!(v > 0.0)) throw Error("schema", "field 'Sigma_by_group' must be positive");

  const json& root = require(j, "", "root_node_location");
  if (root.is_number()) {
    out.root_location = Eigen::VectorXd::Constant(J, as<double>(root, "root_node_location"));
  } else {
    out.root_location = to_vector(as<std::vector<double>>(root, "root_node_location"));
    if (out.root_location.size() != J)
      throw Error("schema", "field 'root_node_location' needs a number or " + std::to_string(J) + " entries");
  }
  return out;
}

json bundle_to_json(const ParameterBundle& b) {
  json out = catalog_to_json(b.catalog);
  out["tree"] = to_newick(b.tree);
  out["class_probability"] = from_vector(b.class_probability);
  out["Sigma_by_group"] = from_vector(b.sigma_by_group);
  out["root_node_location"] = from_vector(b.root_location);
  return out;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error("schema", path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const json& record) { write_text(path, record.dump(2) + "\n"); }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("io", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("io", "failed writing " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ResponseMatrix read_responses_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io", "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("input", path.string() + " is empty");
  const auto header = split_csv_line(line);
  if (header.size() < 2) throw Error("input", path.string() + ": need an id column and at least one item");
  std::vector<std::string> labels(header.begin() + 1, header.end());
  const int J = static_cast<int>(labels.size());

  std::vector<std::uint8_t> values;
  std::vector<std::string> ids;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != J + 1)
      throw Error("input", path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(J + 1) +
                               " fields, got " + std::to_string(cells.size()));
    ids.push_back(cells[0]);
    for (int j = 0; j < J; ++j) {
      if (cells[j + 1] != "0" && cells[j + 1] != "1")
        throw Error("non_binary", path.string() + ":" + std::to_string(line_no) + ": value '" + cells[j + 1] +
                                      "' for " + labels[j] + " is not 0/1");
      values.push_back(cells[j + 1] == "1");
    }
  }
  if (ids.empty()) throw Error("input", path.string() + " has no data rows");
  const int rows = static_cast<int>(ids.size());
  return ResponseMatrix(rows, J, std::move(values), std::move(ids), std::move(labels));
}

void write_responses_csv(const std::filesystem::path& path, const ResponseMatrix& data) {
  std::string text = "id";
  for (const auto& l : data.item_labels()) text += "," + l;
  text += '\n';
  for (int i = 0; i < data.rows(); ++i) {
    text += data.row_ids()[i];
    for (auto v : data.row(i)) {
      text += ',';
      text += v ? '1' : '0';
    }
    text += '\n';
  }
  write_text(path, text);
}

}  // namespace treelcm
