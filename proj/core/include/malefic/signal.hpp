#pragma once

#include <array>
#include <filesystem>
#include <optional>

#include "malefic/tensor.hpp"

namespace malefic::feat {

using diff::Tensor;

// Missing samples are carried as NaN throughout this module.
inline bool is_missing(double v) { return std::isnan(v); }
double missing_value();

// Median over a window of half-width kernel/2 centered at each index; windows
// are truncated at the sequence edges, length is preserved. Kernel must be odd.
std::vector<double> median_filter(const std::vector<double>& series, int kernel);

// Interior gaps are filled linearly between the nearest observed neighbors;
// leading/trailing gaps copy the nearest observed value. channel names the
// series in errors.
std::vector<double> interpolate_missing(const std::vector<double>& series,
                                        const std::string& channel = "");

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// The joint set backing the body features, in fixed order.
enum class BodyJoint { LeftWrist = 0, RightWrist = 1, Neck = 2, MidHip = 3 };
constexpr int kNumBodyJoints = 4;
const char* body_joint_name(BodyJoint j);
std::optional<BodyJoint> body_joint_from_name(const std::string& name);

struct FrameJoints {
    Point left_wrist, right_wrist, neck, mid_hip;
};

double euclidean_distance(Point a, Point b);

// Bust height H: neck to mid-hip distance in the current framing.
double bust_height(const FrameJoints& f);

// Wrist-to-wrist distance divided by bust height. Throws on degenerate
// framing (H <= eps).
double amplitude(const FrameJoints& f, double eps = 1e-6);

// Area of the axis-aligned box over wrists, neck and mid-hip (width x height).
double bounding_box_area(const FrameJoints& f);

// QoM(t) = area(t + lag) - area(t); the final lag frames are missing.
// Entries of areas may be NaN and propagate.
std::vector<double> quantity_of_motion(const std::vector<double>& areas, int lag = 10);

// interpolate_missing then median_filter(kernel) applied independently per
// column of a [T x C] matrix.
Tensor preprocess_track(const Tensor& raw, int median_kernel = 5);

// --- face tracks ---------------------------------------------------------

// Channel set kept for the face features, in file order: the upper-face
// action units, gaze angles and head position/rotation.
const std::vector<std::string>& face_channels();

struct AUTrack {
    std::vector<std::string> channels;
    Tensor values;  // [T x C], NaN rows where the detector failed
    double fps = 25.0;
};

// CSV columns: frame, success, then named channels. success=0 marks the whole
// frame missing. AU intensity columns are validated against [0, 5].
AUTrack read_au_csv(const std::filesystem::path& path);
void write_au_csv(const std::filesystem::path& path, const AUTrack& track);

// Selects the documented face channel set (dropping any extra AU columns)
// and cleans it. Result is [T x 16].
Tensor face_features(const AUTrack& track, int median_kernel = 5);

// --- body tracks ----------------------------------------------------------

struct KeypointTrack {
    struct Joint {
        double x = 0.0, y = 0.0, confidence = 0.0;
        bool present = false;
    };
    std::vector<std::array<Joint, kNumBodyJoints>> frames;
    double fps = 25.0;
};

// JSON lines with fields: frame, joint, x, y, confidence.
KeypointTrack read_pose_jsonl(const std::filesystem::path& path);
void write_pose_jsonl(const std::filesystem::path& path, const KeypointTrack& track);

struct BodyFeatureTrack {
    std::vector<double> amplitude;  // NaN where joints are missing/low confidence
    std::vector<double> qom;
};

// Per-frame amplitude and QoM. Frames where any needed joint is absent, below
// min_confidence, or degenerate (H <= eps) are missing.
BodyFeatureTrack body_features(const KeypointTrack& track, int qom_lag = 10,
                               double min_confidence = 0.3, double eps = 1e-6);

// Cleans both channels into a [T x 2] matrix (amplitude, qom).
Tensor body_feature_matrix(const BodyFeatureTrack& track, int median_kernel = 5);

// --- generic feature files --------------------------------------------------

void write_feat_csv(const std::filesystem::path& path, const Tensor& features,
                    const std::vector<std::string>& channels);
Tensor read_feat_csv(const std::filesystem::path& path, std::vector<std::string>* channels = nullptr);

}  // namespace malefic::feat
