#include "malefic/signal.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace malefic::feat {

double missing_value() { return std::numeric_limits<double>::quiet_NaN(); }

std::vector<double> median_filter(const std::vector<double>& series, int kernel) {
    if (kernel < 1 || kernel % 2 == 0)
        throw ParamError("median_filter: kernel must be odd and positive, got " +
                         std::to_string(kernel));
    for (double v : series)
        if (is_missing(v)) throw DataError("median_filter: series has missing values; interpolate first");
    const int64_t n = static_cast<int64_t>(series.size());
    std::vector<double> out(series.size());
    const int64_t half = kernel / 2;
    std::vector<double> window;
    window.reserve(static_cast<size_t>(kernel));
    for (int64_t i = 0; i < n; ++i) {
        const int64_t lo = std::max<int64_t>(0, i - half);
        const int64_t hi = std::min<int64_t>(n - 1, i + half);
        window.assign(series.begin() + lo, series.begin() + hi + 1);
        std::sort(window.begin(), window.end());
        const size_t m = window.size();
        out[static_cast<size_t>(i)] =
            (m % 2 == 1) ? window[m / 2] : 0.5 * (window[m / 2 - 1] + window[m / 2]);
    }
    return out;
}

std::vector<double> interpolate_missing(const std::vector<double>& series,
                                        const std::string& channel) {
    const int64_t n = static_cast<int64_t>(series.size());
    int64_t first = -1, last = -1;
    for (int64_t i = 0; i < n; ++i) {
        if (!is_missing(series[static_cast<size_t>(i)])) {
            if (first < 0) first = i;
            last = i;
        }
    }
    if (first < 0)
        throw DataError("interpolate_missing: channel '" + (channel.empty() ? "?" : channel) +
                        "' has no observed values");
    std::vector<double> out = series;
    for (int64_t i = 0; i < first; ++i) out[static_cast<size_t>(i)] = series[static_cast<size_t>(first)];
    for (int64_t i = last + 1; i < n; ++i) out[static_cast<size_t>(i)] = series[static_cast<size_t>(last)];
    int64_t prev = first;
    for (int64_t i = first + 1; i <= last; ++i) {
        if (is_missing(series[static_cast<size_t>(i)])) continue;
        if (i > prev + 1) {
            const double lo = series[static_cast<size_t>(prev)];
            const double hi = series[static_cast<size_t>(i)];
            const double span = static_cast<double>(i - prev);
            for (int64_t j = prev + 1; j < i; ++j)
                out[static_cast<size_t>(j)] = lo + (hi - lo) * static_cast<double>(j - prev) / span;
        }
        prev = i;
    }
    return out;
}

const char* body_joint_name(BodyJoint j) {
    switch (j) {
        case BodyJoint::LeftWrist: return "left_wrist";
        case BodyJoint::RightWrist: return "right_wrist";
        case BodyJoint::Neck: return "neck";
        case BodyJoint::MidHip: return "mid_hip";
    }
    return "?";
}

std::optional<BodyJoint> body_joint_from_name(const std::string& name) {
    for (int i = 0; i < kNumBodyJoints; ++i)
        if (name == body_joint_name(static_cast<BodyJoint>(i))) return static_cast<BodyJoint>(i);
    return std::nullopt;
}

double euclidean_distance(Point a, Point b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

double bust_height(const FrameJoints& f) { return euclidean_distance(f.neck, f.mid_hip); }

double amplitude(const FrameJoints& f, double eps) {
    const double h = bust_height(f);
    if (h <= eps)
        throw DataError("amplitude: degenerate framing, bust height " + std::to_string(h));
    return euclidean_distance(f.left_wrist, f.right_wrist) / h;
}

double bounding_box_area(const FrameJoints& f) {
    const double xs[4] = {f.left_wrist.x, f.right_wrist.x, f.neck.x, f.mid_hip.x};
    const double ys[4] = {f.left_wrist.y, f.right_wrist.y, f.neck.y, f.mid_hip.y};
    const auto [xmin, xmax] = std::minmax_element(std::begin(xs), std::end(xs));
    const auto [ymin, ymax] = std::minmax_element(std::begin(ys), std::end(ys));
    return (*xmax - *xmin) * (*ymax - *ymin);
}

std::vector<double> quantity_of_motion(const std::vector<double>& areas, int lag) {
    if (lag <= 0) throw ParamError("quantity_of_motion: lag must be positive, got " + std::to_string(lag));
    const int64_t n = static_cast<int64_t>(areas.size());
    std::vector<double> out(areas.size(), missing_value());
    for (int64_t t = 0; t + lag < n; ++t) {
        const double a0 = areas[static_cast<size_t>(t)];
        const double a1 = areas[static_cast<size_t>(t + lag)];
        if (is_missing(a0) || is_missing(a1)) continue;
        out[static_cast<size_t>(t)] = a1 - a0;
    }
    return out;
}

Tensor preprocess_track(const Tensor& raw, int median_kernel) {
    if (raw.rank() != 2) throw ShapeError("preprocess_track: need [TxC], got " + raw.shape_str());
    const int64_t T = raw.rows(), C = raw.cols();
    Tensor out({T, C});
    std::vector<double> col(static_cast<size_t>(T));
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t t = 0; t < T; ++t) col[static_cast<size_t>(t)] = raw.at(t, c);
        const auto cleaned = median_filter(interpolate_missing(col, "col" + std::to_string(c)),
                                           median_kernel);
        for (int64_t t = 0; t < T; ++t) out.at(t, c) = cleaned[static_cast<size_t>(t)];
    }
    return out;
}

const std::vector<std::string>& face_channels() {
    static const std::vector<std::string> names = {
        "AU01_r", "AU02_r", "AU04_r", "AU05_r", "AU06_r", "AU07_r", "AU09_r", "AU45_r",
        "gaze_angle_x", "gaze_angle_y", "pose_Tx", "pose_Ty", "pose_Tz",
        "pose_Rx", "pose_Ry", "pose_Rz"};
    return names;
}

namespace {

bool is_au_channel(const std::string& name) {
    return name.size() >= 4 && name.rfind("AU", 0) == 0 && name.substr(name.size() - 2) == "_r";
}

std::vector<std::string> parse_csv_row(const std::string& line) {
    std::vector<std::string> cells = split_string(line, ',');
    for (auto& c : cells) {
        const auto b = c.find_first_not_of(" \t\r");
        const auto e = c.find_last_not_of(" \t\r");
        c = (b == std::string::npos) ? "" : c.substr(b, e - b + 1);
    }
    return cells;
}

}  // namespace

AUTrack read_au_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty AU csv: " + path.string());
    const auto header = parse_csv_row(line);
    if (header.size() < 3 || header[0] != "frame" || header[1] != "success")
        throw DataError("AU csv must start with frame,success columns: " + path.string());
    AUTrack track;
    track.channels.assign(header.begin() + 2, header.end());
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = parse_csv_row(line);
        if (cells.size() != header.size())
            throw DataError("AU csv row has " + std::to_string(cells.size()) + " cells, expected " +
                            std::to_string(header.size()) + ": " + path.string());
        const bool ok = std::stod(cells[1]) != 0.0;
        std::vector<double> row(track.channels.size(), missing_value());
        if (ok) {
            for (size_t c = 0; c < track.channels.size(); ++c) {
                const double v = std::stod(cells[c + 2]);
                if (is_au_channel(track.channels[c]) && (v < 0.0 || v > 5.0))
                    throw DataError("AU intensity out of [0,5] in " + path.string() + ": " +
                                    track.channels[c] + "=" + std::to_string(v));
                row[c] = v;
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("AU csv has no frames: " + path.string());
    track.values = Tensor({static_cast<int64_t>(rows.size()),
                           static_cast<int64_t>(track.channels.size())});
    for (size_t t = 0; t < rows.size(); ++t)
        for (size_t c = 0; c < rows[t].size(); ++c)
            track.values.at(static_cast<int64_t>(t), static_cast<int64_t>(c)) = rows[t][c];
    return track;
}

void write_au_csv(const std::filesystem::path& path, const AUTrack& track) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "frame,success";
    for (const auto& c : track.channels) out << "," << c;
    out << "\n";
    out.precision(17);
    for (int64_t t = 0; t < track.values.rows(); ++t) {
        const bool ok = !is_missing(track.values.at(t, 0));
        out << t << "," << (ok ? 1 : 0);
        for (int64_t c = 0; c < track.values.cols(); ++c)
            out << "," << (ok ? track.values.at(t, c) : 0.0);
        out << "\n";
    }
}

Tensor face_features(const AUTrack& track, int median_kernel) {
    const auto& wanted = face_channels();
    std::vector<int64_t> src(wanted.size(), -1);
    for (size_t w = 0; w < wanted.size(); ++w) {
        for (size_t c = 0; c < track.channels.size(); ++c)
            if (track.channels[c] == wanted[w]) src[w] = static_cast<int64_t>(c);
        if (src[w] < 0) throw DataError("AU track missing channel " + wanted[w]);
    }
    const int64_t T = track.values.rows();
    Tensor selected({T, static_cast<int64_t>(wanted.size())});
    for (int64_t t = 0; t < T; ++t)
        for (size_t w = 0; w < wanted.size(); ++w)
            selected.at(t, static_cast<int64_t>(w)) = track.values.at(t, src[w]);
    return preprocess_track(selected, median_kernel);
}

KeypointTrack read_pose_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    KeypointTrack track;
    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("bad pose jsonl at " + path.string() + ":" + std::to_string(lineno) +
                            ": " + e.what());
        }
        const auto frame = j.at("frame").get<int64_t>();
        const auto joint = body_joint_from_name(j.at("joint").get<std::string>());
        if (!joint) continue;  // joints outside the tracked set are ignored
        if (frame < 0) throw DataError("negative frame index in " + path.string());
        if (static_cast<size_t>(frame) >= track.frames.size())
            track.frames.resize(static_cast<size_t>(frame) + 1);
        auto& slot = track.frames[static_cast<size_t>(frame)][static_cast<size_t>(*joint)];
        slot.x = j.at("x").get<double>();
        slot.y = j.at("y").get<double>();
        slot.confidence = j.at("confidence").get<double>();
        slot.present = true;
        if (j.contains("fps")) track.fps = j.at("fps").get<double>();
    }
    return track;
}

void write_pose_jsonl(const std::filesystem::path& path, const KeypointTrack& track) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    for (size_t t = 0; t < track.frames.size(); ++t) {
        for (int jt = 0; jt < kNumBodyJoints; ++jt) {
            const auto& j = track.frames[t][static_cast<size_t>(jt)];
            if (!j.present) continue;
            nlohmann::json rec = {{"frame", t},
                                  {"joint", body_joint_name(static_cast<BodyJoint>(jt))},
                                  {"x", j.x},
                                  {"y", j.y},
                                  {"confidence", j.confidence}};
            if (t == 0 && jt == 0) rec["fps"] = track.fps;
            out << rec.dump() << "\n";
        }
    }
}

BodyFeatureTrack body_features(const KeypointTrack& track, int qom_lag, double min_confidence,
                               double eps) {
    const size_t T = track.frames.size();
    BodyFeatureTrack out;
    out.amplitude.assign(T, missing_value());
    std::vector<double> areas(T, missing_value());
    for (size_t t = 0; t < T; ++t) {
        const auto& f = track.frames[t];
        bool ok = true;
        for (int jt = 0; jt < kNumBodyJoints; ++jt) {
            const auto& j = f[static_cast<size_t>(jt)];
            if (!j.present || j.confidence < min_confidence || !std::isfinite(j.x) ||
                !std::isfinite(j.y))
                ok = false;
        }
        if (!ok) continue;
        const FrameJoints fj = {{f[0].x, f[0].y}, {f[1].x, f[1].y}, {f[2].x, f[2].y},
                                {f[3].x, f[3].y}};
        if (bust_height(fj) <= eps) continue;  // degenerate framing: frame is missing
        out.amplitude[t] = amplitude(fj, eps);
        areas[t] = bounding_box_area(fj);
    }
    out.qom = quantity_of_motion(areas, qom_lag);
    return out;
}

Tensor body_feature_matrix(const BodyFeatureTrack& track, int median_kernel) {
    const int64_t T = static_cast<int64_t>(track.amplitude.size());
    Tensor raw({T, 2});
    for (int64_t t = 0; t < T; ++t) {
        raw.at(t, 0) = track.amplitude[static_cast<size_t>(t)];
        raw.at(t, 1) = track.qom[static_cast<size_t>(t)];
    }
    return preprocess_track(raw, median_kernel);
}

void write_feat_csv(const std::filesystem::path& path, const Tensor& features,
                    const std::vector<std::string>& channels) {
    if (features.rank() != 2 || features.cols() != static_cast<int64_t>(channels.size()))
        throw ShapeError("write_feat_csv: " + features.shape_str() + " does not match " +
                         std::to_string(channels.size()) + " channels");
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out << "frame";
    for (const auto& c : channels) out << "," << c;
    out << "\n";
    out.precision(17);
    for (int64_t t = 0; t < features.rows(); ++t) {
        out << t;
        for (int64_t c = 0; c < features.cols(); ++c) out << "," << features.at(t, c);
        out << "\n";
    }
}

Tensor read_feat_csv(const std::filesystem::path& path, std::vector<std::string>* channels) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty feature csv: " + path.string());
    const auto header = parse_csv_row(line);
    if (header.size() < 2 || header[0] != "frame")
        throw DataError("feature csv must start with a frame column: " + path.string());
    if (channels) channels->assign(header.begin() + 1, header.end());
    std::vector<double> flat;
    int64_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = parse_csv_row(line);
        if (cells.size() != header.size())
            throw DataError("feature csv row width mismatch: " + path.string());
        for (size_t c = 1; c < cells.size(); ++c) flat.push_back(std::stod(cells[c]));
        ++rows;
    }
    if (rows == 0) throw DataError("feature csv has no frames: " + path.string());
    return Tensor::from_matrix(rows, static_cast<int64_t>(header.size()) - 1, std::move(flat));
}

}  // namespace malefic::feat
