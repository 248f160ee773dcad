#ifndef FORECAST_REPORT_HPP
#define FORECAST_REPORT_HPP

#include <string>
#include <vector>

#include "forecast/error_matrix.hpp"
#include "forecast/matrix.hpp"
#include "forecast/strategies.hpp"

#include "json.hpp"

namespace forecast {

// ---- CSV ----------------------------------------------------------------

// Row-major CSV with a header row of column labels.
void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& column_labels);

// Reads back a matrix written by write_matrix_csv (header row skipped).
Matrix read_matrix_csv(const std::string& path);

// ---- SVG heatmap --------------------------------------------------------

// Confusion-matrix style heatmap with a fixed 10-step grayscale ramp.
// Values are expected in [0, 1]; 0.0 renders darkest. Row/column labels go
// in the margins.
std::string svg_heatmap(const Matrix& values, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels);

void write_svg_heatmap(const std::string& path, const Matrix& values,
                       const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_labels);

// ---- mapping history ----------------------------------------------------

// [{"epoch": k, "assignment": [1-based...], "rmp": x}, ...]
nlohmann::json mapping_history_to_json(const std::vector<MappingEvent>& history);
std::vector<MappingEvent> mapping_history_from_json(const nlohmann::json& j);

// ---- checkpoints --------------------------------------------------------

struct NamedTensor {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> data;
};

struct Checkpoint {
    std::vector<NamedTensor> tensors;
    nlohmann::json manifest_extra;  // strategy_tag, mapping, dimensions
};

// Flat binary container: magic, JSON manifest (names/shapes plus extras),
// then the raw little-endian doubles in manifest order. Written via a
// temporary file and an atomic rename.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint to_checkpoint(const LinearBank& bank);
Checkpoint to_checkpoint(const MlpModel& model);

// Atomic small-file write (write to path + ".tmp", then rename).
void write_file_atomic(const std::string& path, const std::string& contents);

} // namespace forecast

#endif // FORECAST_REPORT_HPP
