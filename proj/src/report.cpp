#include "treelcm/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "treelcm/chain_io.hpp"
#include "treelcm/error.hpp"
#include "treelcm/tree.hpp"

namespace treelcm {

using nlohmann::json;

namespace {

constexpr double kMargin = 20.0;
constexpr double kFontSize = 11.0;
constexpr double kTreeWidth = 320.0;
constexpr double kLeafGap = 40.0;
constexpr double kBarWidth = 8.0;
constexpr double kPanelHeight = 110.0;
constexpr double kPanelGap = 36.0;

// The palette is all named colors so no digits leak into the SVG.
const char* const kPalette[] = {"steelblue", "darkorange", "seagreen", "firebrick", "mediumpurple",
                                "sienna",    "orchid",     "slategray", "olive",    "teal"};

double round_to(double x, int digits) {
  const double scale = std::pow(10.0, digits);
  return std::round(x * scale) / scale;
}

double px(double x) { return round_to(x, 2); }

std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

json line(double x1, double y1, double x2, double y2, const std::string& cls, const std::string& stroke = "black") {
  return json{{"kind", "line"}, {"class", cls}, {"x1", px(x1)}, {"y1", px(y1)}, {"x2", px(x2)},
              {"y2", px(y2)},   {"stroke", stroke}};
}

json text(double x, double y, const std::string& body, const std::string& cls, const std::string& anchor = "start") {
  return json{{"kind", "text"}, {"class", cls}, {"x", px(x)}, {"y", px(y)}, {"text", body}, {"anchor", anchor}};
}

json rect(double x, double y, double w, double h, const std::string& cls, const std::string& fill) {
  return json{{"kind", "rect"}, {"class", cls}, {"x", px(x)},    {"y", px(y)},
              {"width", px(w)}, {"height", px(h)}, {"fill", fill}};
}

std::string class_header(const PosteriorSummary& s, int k) {
  const auto& p = s.pi[k];
  return "v" + std::to_string(k + 1) + ": " + fixed(p.mean, 2) + " (" + fixed(p.lower, 2) + ", " + fixed(p.upper, 2) +
         ")";
}

// Returns the panel height.
double layout_tree(const PosteriorSummary& s, double x0, double y0, json& primitives, json& section) {
  const DdtTree tree = parse_newick(s.map_tree);
  std::vector<int> leaves;
  for (int v : tree.preorder())
    if (tree.is_leaf(v)) leaves.push_back(v);
  std::vector<double> y(tree.size(), 0.0);
  for (std::size_t i = 0; i < leaves.size(); ++i) y[leaves[i]] = y0 + kLeafGap * (static_cast<double>(i) + 0.5);
  for (int v : tree.postorder())
    if (!tree.is_leaf(v)) y[v] = 0.5 * (y[tree.node(v).children[0]] + y[tree.node(v).children[1]]);
  auto x_of = [&](double t) { return x0 + kTreeWidth * t; };

  json edges = json::array();
  for (int v : tree.preorder()) {
    const int p = tree.parent(v);
    const double from = p < 0 ? 0.0 : tree.time(p);
    const double length = round_to(tree.branch_length(v), 3);
    const bool root_edge = p < 0;
    json edge{{"node", v}, {"root_edge", root_edge}, {"length", length}};
    if (tree.is_leaf(v)) edge["leaf"] = tree.label(v);
    edges.push_back(edge);
    primitives.push_back(line(x_of(from), y[v], x_of(tree.time(v)), y[v], root_edge ? "root-edge" : "edge"));
    if (!tree.is_leaf(v)) {
      const auto& ch = tree.node(v).children;
      primitives.push_back(line(x_of(tree.time(v)), y[ch[0]], x_of(tree.time(v)), y[ch[1]], "connector"));
    }
    // The root edge is drawn but not labeled.
    if (!root_edge)
      primitives.push_back(text(0.5 * (x_of(from) + x_of(tree.time(v))), y[v] - 4.0, fixed(length, 3), "edge-label",
                                "middle"));
  }
  json leaf_labels = json::array();
  for (int v : leaves) {
    const int k = std::stoi(tree.label(v).substr(1)) - 1;
    const std::string header = class_header(s, k);
    leaf_labels.push_back(json{{"leaf", tree.label(v)}, {"label", header}});
    primitives.push_back(text(x_of(1.0) + 6.0, y[v] + 4.0, header, "leaf-label"));
  }
  section = json{{"newick", s.map_tree}, {"edges", edges}, {"leaves", leaf_labels}};
  return kLeafGap * static_cast<double>(leaves.size());
}

double layout_profiles(const PosteriorSummary& s, double x0, double y0, json& primitives, json& section) {
  const double plot_w = kBarWidth * s.J;
  json panels = json::array();
  for (int k = 0; k < s.K; ++k) {
    const double top = y0 + k * (kPanelHeight + kPanelGap);
    const double base = top + kPanelHeight;
    const std::string header = class_header(s, k);
    primitives.push_back(text(x0, top - 6.0, header, "panel-header"));
    primitives.push_back(line(x0, base, x0 + plot_w, base, "axis"));
    primitives.push_back(line(x0, top, x0, base, "axis"));
    json bars = json::array();
    for (int j = 0; j < s.J; ++j) {
      const auto& c = s.theta[k][j];
      const int g = j < static_cast<int>(s.item_groups.size()) ? s.item_groups[j] : 0;
      const std::string color = kPalette[g % std::size(kPalette)];
      const double mean = round_to(c.mean, 3), lower = round_to(c.lower, 3), upper = round_to(c.upper, 3);
      const double x = x0 + kBarWidth * j;
      primitives.push_back(rect(x + 1.0, base - kPanelHeight * mean, kBarWidth - 2.0, kPanelHeight * mean, "bar", color));
      primitives.push_back(line(x + 0.5 * kBarWidth, base - kPanelHeight * lower, x + 0.5 * kBarWidth,
                                base - kPanelHeight * upper, "error-bar"));
      bars.push_back(json{{"item", j < static_cast<int>(s.item_labels.size()) ? s.item_labels[j] : ""},
                          {"group", g},
                          {"mean", mean},
                          {"lower", lower},
                          {"upper", upper}});
    }
    panels.push_back(json{{"class", "v" + std::to_string(k + 1)}, {"header", header}, {"bars", bars}});
  }
  // Group legend under the panels.
  const double legend_y = y0 + s.K * (kPanelHeight + kPanelGap);
  json legend = json::array();
  for (std::size_t g = 0; g < s.group_names.size(); ++g) {
    const std::string color = kPalette[g % std::size(kPalette)];
    const double lx = x0 + 90.0 * static_cast<double>(g % 6);
    const double ly = legend_y + 16.0 * static_cast<double>(g / 6);
    primitives.push_back(rect(lx, ly - 8.0, 8.0, 8.0, "legend-swatch", color));
    primitives.push_back(text(lx + 12.0, ly, s.group_names[g], "legend-label"));
    legend.push_back(json{{"group", s.group_names[g]}, {"color", color}});
  }
  section = json{{"panels", panels}, {"legend", legend}};
  const double legend_h = 16.0 * std::ceil(static_cast<double>(s.group_names.size()) / 6.0);
  return s.K * (kPanelHeight + kPanelGap) + legend_h;
}

std::string number(const json& v) { return v.dump(); }

std::string escape(const std::string& in) {
  std::string out;
  for (char c : in) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

PlotOption parse_plot_option(std::string_view t) {
  if (t == "all") return PlotOption::all;
  if (t == "tree") return PlotOption::tree;
  if (t == "profile") return PlotOption::profile;
  throw Error("usage", "unknown plot option '" + std::string(t) + "'; valid options are all, tree, profile");
}

std::string to_string(PlotOption option) {
  switch (option) {
    case PlotOption::all: return "all";
    case PlotOption::tree: return "tree";
    case PlotOption::profile: return "profile";
  }
  return "all";
}

json build_plot_data(const PosteriorSummary& s, PlotOption option) {
  json primitives = json::array();
  json out{{"schema_version", kSchemaVersion}, {"plot_option", to_string(option)}};
  double width = kMargin, height = 0.0;
  const double top = kMargin + 16.0;
  if (option != PlotOption::profile) {
    json section;
    height = std::max(height, layout_tree(s, width, top, primitives, section));
    out["tree"] = section;
    width += kTreeWidth + 150.0;
  }
  if (option != PlotOption::tree) {
    json section;
    height = std::max(height, layout_profiles(s, width, top, primitives, section));
    out["profile"] = section;
    width += std::max(kBarWidth * s.J, 540.0);
  }
  out["width"] = px(width + kMargin);
  out["height"] = px(top + height + kMargin);
  out["font_size"] = kFontSize;
  out["primitives"] = primitives;
  return out;
}

std::string render_svg(const json& d) {
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + number(d.at("width")) + "\" height=\"" +
                    number(d.at("height")) + "\" font-family=\"sans-serif\" font-size=\"" +
                    number(d.at("font_size")) + "\">\n";
  for (const auto& p : d.at("primitives")) {
    const std::string kind = p.at("kind").get<std::string>();
    const std::string cls = p.at("class").get<std::string>();
    if (kind == "line") {
      out += "<line class=\"" + cls + "\" x1=\"" + number(p.at("x1")) + "\" y1=\"" + number(p.at("y1")) + "\" x2=\"" +
             number(p.at("x2")) + "\" y2=\"" + number(p.at("y2")) + "\" stroke=\"" +
             p.at("stroke").get<std::string>() + "\"/>\n";
    } else if (kind == "rect") {
      out += "<rect class=\"" + cls + "\" x=\"" + number(p.at("x")) + "\" y=\"" + number(p.at("y")) + "\" width=\"" +
             number(p.at("width")) + "\" height=\"" + number(p.at("height")) + "\" fill=\"" +
             p.at("fill").get<std::string>() + "\"/>\n";
    } else if (kind == "text") {
      out += "<text class=\"" + cls + "\" x=\"" + number(p.at("x")) + "\" y=\"" + number(p.at("y")) +
             "\" text-anchor=\"" + p.at("anchor").get<std::string>() + "\">" +
             escape(p.at("text").get<std::string>()) + "</text>\n";
    }
  }
  out += "</svg>\n";
  return out;
}

}  // namespace treelcm
