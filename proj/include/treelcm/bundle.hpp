#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "treelcm/ddt_prior.hpp"
#include "treelcm/lcm_model.hpp"
#include "treelcm/tree.hpp"

namespace treelcm {

// Item labels plus named groups. Files carry 1-based item indices.
struct ItemCatalog {
  std::vector<std::string> item_labels;
  std::vector<std::string> group_names;
  ItemGrouping grouping;

  int item_count() const { return static_cast<int>(item_labels.size()); }
};

ItemCatalog catalog_from_json(const nlohmann::json& record);
nlohmann::json catalog_to_json(const ItemCatalog& catalog);
// A single group named "all".
ItemCatalog single_group_catalog(std::vector<std::string> item_labels);

// Everything needed to simulate a dataset.
struct ParameterBundle {
  DdtTree tree;
  Eigen::VectorXd class_probability;
  ItemCatalog catalog;
  DiffusionVariances sigma_by_group;
  Eigen::VectorXd root_location;  // length J
};

// Throws Error("schema") naming the offending field path.
ParameterBundle bundle_from_json(const nlohmann::json& record);
nlohmann::json bundle_to_json(const ParameterBundle& bundle);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& record);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Header "id,<item labels>", then one row per subject of 0/1 values.
ResponseMatrix read_responses_csv(const std::filesystem::path& path);
void write_responses_csv(const std::filesystem::path& path, const ResponseMatrix& data);

}  // namespace treelcm
