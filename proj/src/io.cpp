#include "spikerep/io.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace spikerep {
namespace {

std::string sidecar_path(const std::string& bin_path) {
    const auto dot = bin_path.rfind(".bin");
    if (dot == bin_path.size() - 4) return bin_path.substr(0, dot) + ".json";
    return bin_path + ".json";
}

nlohmann::json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    in >> j;
    return j;
}

std::int64_t parse_int_field(const std::string& s, const std::string& path) {
    std::int64_t v = 0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || p != last)
        throw std::runtime_error(path + ": malformed integer field '" + s + "'");
    return v;
}

}  // namespace

Recording read_recording(const std::string& path) {
    const nlohmann::json meta = load_json(sidecar_path(path));
    if (meta.value("dtype", "") != "f32le")
        throw std::runtime_error(path + ": sidecar dtype must be f32le");

    Recording rec;
    rec.sample_rate_hz = meta.at("sample_rate_hz").get<double>();
    const std::int64_t n_channels = meta.at("n_channels").get<std::int64_t>();
    const std::int64_t n_frames = meta.at("n_frames").get<std::int64_t>();
    for (const auto& pos : meta.at("channel_positions"))
        rec.geometry.channel_positions.emplace_back(pos.at(0).get<double>(),
                                                    pos.at(1).get<double>());

    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open " + path);
    const std::int64_t bytes = in.tellg();
    if (bytes != n_frames * n_channels * 4)
        throw std::runtime_error(path + ": file size does not match declared n_frames x n_channels");
    in.seekg(0);

    // Time-major on disk: frame-by-frame rows. Eigen is column-major, so go
    // through a row-major staging block, chunked to bound peak memory.
    rec.samples.resize(n_frames, n_channels);
    const std::int64_t chunk = 1 << 16;
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> buf;
    for (std::int64_t f0 = 0; f0 < n_frames; f0 += chunk) {
        const std::int64_t rows = std::min(chunk, n_frames - f0);
        buf.resize(rows, n_channels);
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(rows) * n_channels * 4);
        if (!in) throw std::runtime_error(path + ": short read");
        rec.samples.middleRows(f0, rows) = buf;
    }
    rec.validate();
    return rec;
}

void write_recording(const Recording& rec, const std::string& path) {
    rec.validate();

    nlohmann::json meta;
    meta["sample_rate_hz"] = rec.sample_rate_hz;
    meta["n_channels"] = rec.n_channels();
    meta["n_frames"] = rec.n_frames();
    meta["dtype"] = "f32le";
    auto positions = nlohmann::json::array();
    for (const auto& [x, y] : rec.geometry.channel_positions)
        positions.push_back({x, y});
    meta["channel_positions"] = positions;

    std::ofstream side(sidecar_path(path));
    if (!side) throw std::runtime_error("cannot write " + sidecar_path(path));
    side << meta.dump(2) << "\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    const std::int64_t chunk = 1 << 16;
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> buf;
    for (std::int64_t f0 = 0; f0 < rec.n_frames(); f0 += chunk) {
        const std::int64_t rows = std::min(chunk, rec.n_frames() - f0);
        buf = rec.samples.middleRows(f0, rows);
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()) * 4);
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

GroundTruth read_ground_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "unit_id,frame")
        throw std::runtime_error(path + ": expected header 'unit_id,frame'");

    GroundTruth gt;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error(path + ": malformed row '" + line + "'");
        const std::int64_t unit = parse_int_field(line.substr(0, comma), path);
        const std::int64_t frame = parse_int_field(line.substr(comma + 1), path);
        if (frame < 0) throw std::runtime_error(path + ": negative frame");
        gt.units[static_cast<int>(unit)].push_back(frame);
    }
    for (auto& [unit, frames] : gt.units) std::sort(frames.begin(), frames.end());
    return gt;
}

void write_ground_truth(const GroundTruth& gt, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "unit_id,frame\n";
    for (const auto& [unit, frames] : gt.units)
        for (const auto frame : frames) out << unit << "," << frame << "\n";
    if (!out) throw std::runtime_error("short write to " + path);
}

SortingResult read_sorting(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "frame,unit_label")
        throw std::runtime_error(path + ": expected header 'frame,unit_label'");

    SortingResult sr;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error(path + ": malformed row '" + line + "'");
        sr.events.emplace_back(
            parse_int_field(line.substr(0, comma), path),
            static_cast<int>(parse_int_field(line.substr(comma + 1), path)));
    }
    sr.validate();
    return sr;
}

void write_sorting(const SortingResult& sr, const std::string& path) {
    sr.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "frame,unit_label\n";
    for (const auto& [frame, label] : sr.events)
        out << frame << "," << label << "\n";
    if (!out) throw std::runtime_error("short write to " + path);
}

std::vector<WaveformSnippet> read_snippets(const std::string& path) {
    const nlohmann::json meta = load_json(sidecar_path(path));
    const std::int64_t n = meta.at("n_snippets").get<std::int64_t>();
    const int T = meta.at("T").get<int>();
    const int C = meta.at("C").get<int>();
    const auto& peaks = meta.at("peak_channels");
    const auto& frames = meta.at("event_frames");

    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot open " + path);
    if (in.tellg() != n * T * C * 4)
        throw std::runtime_error(path + ": file size does not match sidecar shape");
    in.seekg(0);

    std::vector<WaveformSnippet> out(n);
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> buf(T, C);
    for (std::int64_t i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(T) * C * 4);
        out[i].values = buf;
        out[i].peak_channel_global = peaks.at(i).get<int>();
        out[i].event_frame = frames.at(i).get<std::int64_t>();
    }
    return out;
}

void write_snippets(const std::vector<WaveformSnippet>& snippets,
                    const std::string& path) {
    nlohmann::json meta;
    meta["n_snippets"] = snippets.size();
    meta["T"] = snippets.empty() ? 0 : static_cast<int>(snippets[0].values.rows());
    meta["C"] = snippets.empty() ? 0 : static_cast<int>(snippets[0].values.cols());
    auto peaks = nlohmann::json::array();
    auto frames = nlohmann::json::array();
    for (const auto& s : snippets) {
        peaks.push_back(s.peak_channel_global);
        frames.push_back(s.event_frame);
    }
    meta["peak_channels"] = peaks;
    meta["event_frames"] = frames;

    std::ofstream side(sidecar_path(path));
    if (!side) throw std::runtime_error("cannot write " + sidecar_path(path));
    side << meta.dump(2) << "\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& s : snippets) {
        const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                            Eigen::RowMajor>
            buf = s.values;
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size()) * 4);
    }
    if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace spikerep
