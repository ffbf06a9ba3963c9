#pragma once

// File formats: model JSON, observation CSV, adjacency-list graphs, and the
// result files written by the command line tool.

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "pinla/graph_order.hpp"
#include "pinla/marginals.hpp"
#include "pinla/model.hpp"
#include "pinla/optimizer.hpp"

namespace pinla {

// Graph file: first line n, then one line per node "i deg j_1 ... j_deg",
// 0-based indices.
AdjacencyGraph read_graph(std::istream& in);
AdjacencyGraph read_graph_file(const std::string& path);
void write_graph(std::ostream& out, const AdjacencyGraph& graph);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;  // NaN marks an empty or NA cell

  // Index of a column, -1 if absent.
  Index find(const std::string& name) const;
  Index rows() const { return columns.empty() ? 0 : static_cast<Index>(columns[0].size()); }
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

// Parses the model document; relative graph/matrix paths are resolved
// against `base_dir`. Throws ConfigError naming the offending key.
ModelSpec parse_model_spec(const nlohmann::json& doc, const std::string& base_dir);
ModelSpec load_model_spec(const std::string& path);
ModelData load_model_data(const ModelSpec& spec, const CsvTable& table);
std::shared_ptr<const Model> load_model(const std::string& model_path, const std::string& data_path);

// Output files.
void write_json(const std::string& path, const nlohmann::json& doc);
void write_text(const std::string& path, const std::string& text);
void write_marginals_csv(std::ostream& out, const ModelSpec& spec, const LatentMarginals& latent);
nlohmann::json trace_row_json(const TraceRow& row);
nlohmann::json error_json(const std::exception& e);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace pinla
