#include "forecast/report.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "forecast/errors.hpp"

namespace forecast {

namespace fs = std::filesystem;

void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream file(tmp, std::ios::binary);
        if (!file.is_open()) {
            throw DataError("cannot open " + tmp + " for writing");
        }
        file.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!file.good()) {
            throw DataError("write failed for " + tmp);
        }
    }
    fs::rename(tmp, path);
}

// ---- CSV ----------------------------------------------------------------

void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& column_labels) {
    if (!column_labels.empty() && column_labels.size() != m.cols()) {
        throw DimensionError("write_matrix_csv: " + std::to_string(column_labels.size()) +
                             " labels for " + std::to_string(m.cols()) + " columns");
    }
    std::ostringstream out;
    for (std::size_t j = 0; j < m.cols(); ++j) {
        if (j) out << ',';
        out << (column_labels.empty() ? "c" + std::to_string(j + 1) : column_labels[j]);
    }
    out << '\n';
    char buf[40];
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (j) out << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
            out << buf;
        }
        out << '\n';
    }
    write_file_atomic(path, out.str());
}

Matrix read_matrix_csv(const std::string& path) {
    std::ifstream file(path);
    if (!file.is_open()) {
        throw DataError("cannot open " + path);
    }
    std::string line;
    if (!std::getline(file, line)) {
        throw DataError("empty csv " + path);
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(file, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            row.push_back(std::stod(cell));
        }
        if (!rows.empty() && row.size() != rows[0].size()) {
            throw DataError("ragged csv " + path);
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw DataError("csv " + path + " has no data rows");
    }
    Matrix m(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(i, j) = rows[i][j];
        }
    }
    return m;
}

// ---- SVG heatmap --------------------------------------------------------

namespace {

// 10-step grayscale ramp, darkest at 0.0.
std::string ramp_color(double v) {
    if (v < 0.0) v = 0.0;
    if (v > 1.0) v = 1.0;
    int step = static_cast<int>(v * 10.0);
    if (step > 9) step = 9;
    const int shade = 20 + step * 25;  // 20 .. 245
    char buf[8];
    std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", shade, shade, shade);
    return buf;
}

std::string escape_xml(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            default: out += c;
        }
    }
    return out;
}

} // namespace

std::string svg_heatmap(const Matrix& values, const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels) {
    if (!row_labels.empty() && row_labels.size() != values.rows()) {
        throw DimensionError("svg_heatmap: row label count mismatch");
    }
    if (!col_labels.empty() && col_labels.size() != values.cols()) {
        throw DimensionError("svg_heatmap: column label count mismatch");
    }
    const int cell = 24;
    const int margin_left = 70;
    const int margin_top = 50;
    const int width = margin_left + cell * static_cast<int>(values.cols()) + 10;
    const int height = margin_top + cell * static_cast<int>(values.rows()) + 10;

    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
        << height << "\">\n";
    svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
    for (std::size_t j = 0; j < values.cols(); ++j) {
        const std::string label =
            col_labels.empty() ? std::to_string(j + 1) : escape_xml(col_labels[j]);
        const int x = margin_left + static_cast<int>(j) * cell + cell / 2;
        svg << "<text x=\"" << x << "\" y=\"" << margin_top - 8
            << "\" font-size=\"10\" text-anchor=\"middle\" font-family=\"monospace\">" << label
            << "</text>\n";
    }
    for (std::size_t i = 0; i < values.rows(); ++i) {
        const std::string label =
            row_labels.empty() ? std::to_string(i + 1) : escape_xml(row_labels[i]);
        const int y = margin_top + static_cast<int>(i) * cell + cell / 2 + 4;
        svg << "<text x=\"" << margin_left - 6 << "\" y=\"" << y
            << "\" font-size=\"10\" text-anchor=\"end\" font-family=\"monospace\">" << label
            << "</text>\n";
        for (std::size_t j = 0; j < values.cols(); ++j) {
            const int x = margin_left + static_cast<int>(j) * cell;
            const int cy = margin_top + static_cast<int>(i) * cell;
            svg << "<rect x=\"" << x << "\" y=\"" << cy << "\" width=\"" << cell << "\" height=\""
                << cell << "\" fill=\"" << ramp_color(values(i, j))
                << "\" stroke=\"white\" stroke-width=\"1\"/>\n";
        }
    }
    svg << "</svg>\n";
    return svg.str();
}

void write_svg_heatmap(const std::string& path, const Matrix& values,
                       const std::vector<std::string>& row_labels,
                       const std::vector<std::string>& col_labels) {
    write_file_atomic(path, svg_heatmap(values, row_labels, col_labels));
}

// ---- mapping history ----------------------------------------------------

nlohmann::json mapping_history_to_json(const std::vector<MappingEvent>& history) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& event : history) {
        nlohmann::json assignment = nlohmann::json::array();
        for (std::size_t idx : event.mapping.assignment) {
            assignment.push_back(idx + 1);  // 1-based on the wire
        }
        out.push_back({{"epoch", event.epoch},
                       {"assignment", assignment},
                       {"rmp", event.mapping.rmp()}});
    }
    return out;
}

std::vector<MappingEvent> mapping_history_from_json(const nlohmann::json& j) {
    std::vector<MappingEvent> history;
    for (const auto& item : j) {
        MappingEvent event;
        event.epoch = item.at("epoch").get<int>();
        for (const auto& idx : item.at("assignment")) {
            const auto one_based = idx.get<std::size_t>();
            if (one_based == 0) {
                throw DataError("mapping history: assignment indices are 1-based");
            }
            event.mapping.assignment.push_back(one_based - 1);
        }
        event.mapping.epoch_of_last_update = event.epoch;
        history.push_back(std::move(event));
    }
    return history;
}

// ---- checkpoints --------------------------------------------------------

namespace {
constexpr char kMagic[8] = {'F', 'C', 'K', 'P', '0', '0', '1', '\n'};
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json manifest = ckpt.manifest_extra;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& t : ckpt.tensors) {
        std::size_t count = 1;
        for (std::size_t s : t.shape) count *= s;
        if (count != t.data.size()) {
            throw DimensionError("checkpoint: tensor " + t.name + " shape/data mismatch");
        }
        tensors.push_back({{"name", t.name}, {"shape", t.shape}});
    }
    manifest["tensors"] = tensors;
    const std::string manifest_str = manifest.dump();

    std::string blob;
    blob.reserve(sizeof(kMagic) + 8 + manifest_str.size());
    blob.append(kMagic, sizeof(kMagic));
    const std::uint64_t len = manifest_str.size();
    blob.append(reinterpret_cast<const char*>(&len), sizeof(len));
    blob.append(manifest_str);
    for (const auto& t : ckpt.tensors) {
        blob.append(reinterpret_cast<const char*>(t.data.data()),
                    t.data.size() * sizeof(double));
    }
    write_file_atomic(path, blob);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file.is_open()) {
        throw DataError("cannot open checkpoint " + path);
    }
    char magic[sizeof(kMagic)];
    file.read(magic, sizeof(magic));
    if (!file.good() || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("not a checkpoint file: " + path);
    }
    std::uint64_t len = 0;
    file.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string manifest_str(len, '\0');
    file.read(manifest_str.data(), static_cast<std::streamsize>(len));
    if (!file.good()) {
        throw DataError("truncated checkpoint manifest: " + path);
    }
    nlohmann::json manifest = nlohmann::json::parse(manifest_str);

    Checkpoint ckpt;
    for (const auto& t : manifest.at("tensors")) {
        NamedTensor tensor;
        tensor.name = t.at("name").get<std::string>();
        tensor.shape = t.at("shape").get<std::vector<std::size_t>>();
        std::size_t count = 1;
        for (std::size_t s : tensor.shape) count *= s;
        tensor.data.resize(count);
        file.read(reinterpret_cast<char*>(tensor.data.data()),
                  static_cast<std::streamsize>(count * sizeof(double)));
        if (!file.good()) {
            throw DataError("truncated tensor data in checkpoint " + path);
        }
        ckpt.tensors.push_back(std::move(tensor));
    }
    manifest.erase("tensors");
    ckpt.manifest_extra = std::move(manifest);
    return ckpt;
}

namespace {

NamedTensor layer_weight_tensor(const std::string& name, const AffineLayer& layer) {
    NamedTensor t;
    t.name = name;
    t.shape = {layer.out_dim(), layer.in_dim()};
    t.data.assign(layer.weight.data().begin(), layer.weight.data().end());
    return t;
}

NamedTensor layer_bias_tensor(const std::string& name, const AffineLayer& layer) {
    NamedTensor t;
    t.name = name;
    t.shape = {layer.bias.size()};
    t.data = layer.bias;
    return t;
}

nlohmann::json mapping_json(const MappingVector& mapping) {
    nlohmann::json assignment = nlohmann::json::array();
    for (std::size_t idx : mapping.assignment) assignment.push_back(idx + 1);
    return assignment;
}

} // namespace

Checkpoint to_checkpoint(const LinearBank& bank) {
    Checkpoint ckpt;
    for (std::size_t i = 0; i < bank.layers.size(); ++i) {
        const std::string base = "layer" + std::to_string(i + 1);
        ckpt.tensors.push_back(layer_weight_tensor(base + ".weight", bank.layers[i]));
        ckpt.tensors.push_back(layer_bias_tensor(base + ".bias", bank.layers[i]));
    }
    const char* tag = bank.strategy == LinearStrategy::CD   ? "CD"
                      : bank.strategy == LinearStrategy::CI ? "CI"
                                                            : "CSC";
    ckpt.manifest_extra = {{"model", "linear"},
                           {"strategy_tag", tag},
                           {"mapping", mapping_json(bank.mapping)},
                           {"lookback", bank.lookback},
                           {"horizon", bank.horizon},
                           {"n_channels", bank.n_channels}};
    return ckpt;
}

Checkpoint to_checkpoint(const MlpModel& model) {
    Checkpoint ckpt;
    for (std::size_t i = 0; i < model.encoders.size(); ++i) {
        const std::string base = "encoder" + std::to_string(i + 1);
        ckpt.tensors.push_back(layer_weight_tensor(base + ".weight", model.encoders[i]));
        ckpt.tensors.push_back(layer_bias_tensor(base + ".bias", model.encoders[i]));
    }
    ckpt.tensors.push_back(layer_weight_tensor("decoder.weight", model.decoder));
    ckpt.tensors.push_back(layer_bias_tensor("decoder.bias", model.decoder));
    if (!model.embeddings.empty()) {
        NamedTensor t;
        t.name = "embeddings";
        t.shape = {model.embeddings.rows(), model.embeddings.cols()};
        t.data.assign(model.embeddings.data().begin(), model.embeddings.data().end());
        ckpt.tensors.push_back(std::move(t));
    }
    const char* tag = model.strategy == MlpStrategy::CI   ? "MLP-CI"
                      : model.strategy == MlpStrategy::CE ? "MLP-CE"
                                                          : "MLP-CR";
    ckpt.manifest_extra = {{"model", "mlp"},
                           {"strategy_tag", tag},
                           {"mapping", mapping_json(model.mapping)},
                           {"lookback", model.lookback},
                           {"horizon", model.horizon},
                           {"hidden", model.hidden},
                           {"embed_dim", model.embed_dim},
                           {"n_channels", model.n_channels}};
    return ckpt;
}

} // namespace forecast
