#pragma once

#include <Eigen/Dense>

#include <json.hpp>

#include <string>
#include <vector>

#include "kto/analysis.hpp"
#include "kto/dynamics.hpp"
#include "kto/edmd.hpp"
#include "kto/kernels.hpp"
#include "kto/operators.hpp"

namespace kto {

using Json = nlohmann::ordered_json;

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

enum class CsvKind { automatic, vector, text };

/// One row per sample; '#' lines are comments. Vector rows hold d reals,
/// text rows one (optionally double-quoted) string.
SampleSet read_samples_csv(const std::string& path, CsvKind kind = CsvKind::automatic);
void write_samples_csv(const std::string& path, const SampleSet& s, const std::vector<std::string>& comments = {});

Eigen::MatrixXd read_matrix_csv(const std::string& path);
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m, const std::vector<std::string>& comments = {});

/// Rows are states; the first line is "# h=<h> seed=<seed>".
void write_trajectory_csv(const std::string& path, const Trajectory& t, const std::vector<std::string>& comments = {});
Trajectory read_trajectory_csv(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

Json to_json(const KernelSpec& spec);
KernelSpec kernel_from_json(const Json& j);

Json complex_vector_json(const Eigen::VectorXcd& v);
Eigen::VectorXcd complex_vector_from_json(const Json& j);

constexpr int kSpectrumFormatVersion = 1;

Json to_json(const SpectrumResult& s);
SpectrumResult spectrum_from_json(const Json& j);

Json to_json(const ClusterResult& c);
Json to_json(const TicaResult& t);
Json to_json(const EdmdModel& m);
Json to_json(const RkhsElement& e);

}  // namespace kto
