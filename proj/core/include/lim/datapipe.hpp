#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "lim/error.hpp"

namespace lim {

// ---------------------------------------------------------------------------
// Frames and frame sequences
// ---------------------------------------------------------------------------

// A single image: row-major u8 samples, 1 (grayscale) or 3 (RGB) channels.
struct Frame {
  std::size_t width = 0;
  std::size_t height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;  // width * height * channels bytes

  Frame() = default;
  Frame(std::size_t width, std::size_t height, int channels);  // zero-filled

  std::uint8_t& at(std::size_t row, std::size_t col, int channel = 0);
  std::uint8_t at(std::size_t row, std::size_t col, int channel = 0) const;
};

// A fixed-rate sequence of equally sized frames, the unit of video ingestion.
struct FrameSequence {
  double fps = 0.0;
  std::vector<Frame> frames;  // all frames share width/height/channels

  std::size_t width() const { return frames.empty() ? 0 : frames.front().width; }
  std::size_t height() const { return frames.empty() ? 0 : frames.front().height; }
  int channels() const { return frames.empty() ? 1 : frames.front().channels; }
  double duration_s() const {
    return fps > 0.0 ? static_cast<double>(frames.size()) / fps : 0.0;
  }
};

// Frame-sequence container format. Little-endian 25-byte header — magic
// "LIMF", u32 width, u32 height, u8 channels, u32 frame count, f64 fps —
// followed by the raw frame bytes back to back.
std::string serialize_limf(const FrameSequence& seq);
FrameSequence parse_limf(const std::string& bytes);  // IoError when malformed
void write_limf_file(const std::string& path, const FrameSequence& seq);
FrameSequence read_limf_file(const std::string& path);

// ---------------------------------------------------------------------------
// Frame operations
// ---------------------------------------------------------------------------

// Scaled extents and crop offsets chosen by standardize_frame, exposed so the
// geometry is testable without sampling pixels.
struct StandardizedGeometry {
  std::size_t scaled_w = 0;
  std::size_t scaled_h = 0;
  std::size_t offset_x = 0;  // left edge of the centered crop
  std::size_t offset_y = 0;
};

// Geometry of a shortest-side resize followed by a center crop. The source's
// shortest side (width wins ties) is scaled exactly to the target extent on
// the same axis; the other side scales proportionally, rounded to the nearest
// integer; the crop offset is floor((scaled - target) / 2). Throws
// StandardizationError when the proportional side lands below its target,
// DomainError on empty extents.
StandardizedGeometry standardized_geometry(std::size_t width, std::size_t height,
                                           std::size_t target_w, std::size_t target_h);

// Resample a frame to exactly target_w x target_h using the geometry above
// with bilinear interpolation (half-pixel centers, edge clamping).
Frame standardize_frame(const Frame& f, std::size_t target_w = 832,
                        std::size_t target_h = 480);

// ITU-R BT.601 luma: y = 0.299 r + 0.587 g + 0.114 b, rounded to nearest.
// Single-channel frames pass through unchanged.
Frame to_grayscale(const Frame& f);

// Variance-of-Laplacian focus measure: convolve the interior pixels (no
// padding) with the 4-neighbor kernel [[0,1,0],[1,-4,1],[0,1,0]] and return
// the population variance of the responses. Requires a single-channel frame
// of at least 3x3 pixels; constant frames score exactly 0.
double laplacian_sharpness(const Frame& gray);

// ---------------------------------------------------------------------------
// Shots and windows
// ---------------------------------------------------------------------------

// A contiguous span of one source video, in seconds.
struct ShotSpan {
  double start_s = 0.0;
  double end_s = 0.0;
  double length_s() const { return end_s - start_s; }
};

// Convert sorted interior cut timestamps into the shots they delimit.
std::vector<ShotSpan> shots_from_cuts(double duration_s, const std::vector<double>& cuts);

// Keep only shots of at least min_len_s seconds, preserving order.
std::vector<ShotSpan> prune_short_shots(const std::vector<ShotSpan>& shots,
                                        double min_len_s = 5.0);

// Fixed-length windows at start + k*stride while start + window <= end; the
// trailing remainder is dropped. The shot must be at least one window long
// (shorter shots are pruned upstream; violating that is a ContractError).
std::vector<ShotSpan> window_clips(const ShotSpan& shot, double window_s = 5.0,
                                   double stride_s = 2.0);

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

// Produces a caption for a standardized clip. Implementations must be
// deterministic for fixed inputs; a thrown exception makes the pipeline skip
// that clip and continue.
class CaptionProvider {
 public:
  virtual ~CaptionProvider() = default;
  virtual std::string caption(const FrameSequence& clip, const std::string& prompt) = 0;
};

// Detects cut timestamps (seconds, strictly inside the video) in ascending
// order. Implementations must be deterministic for fixed inputs.
class ShotBoundaryProvider {
 public:
  virtual ~ShotBoundaryProvider() = default;
  virtual std::vector<double> boundaries(const FrameSequence& video) = 0;
};

// Deterministic stand-in for a neural shot detector: consecutive frames are
// reduced to normalized 64-bin grayscale histograms and a cut is declared
// where the L1 distance exceeds the threshold.
class HistogramShotProvider : public ShotBoundaryProvider {
 public:
  explicit HistogramShotProvider(double l1_threshold = 0.5);
  std::vector<double> boundaries(const FrameSequence& video) override;

 private:
  double l1_threshold_;
};

// Deterministic stand-in for an LLM captioner: fingerprints the prompt and
// frame bytes and emits a stable synthetic caption.
class MockCaptionProvider : public CaptionProvider {
 public:
  std::string caption(const FrameSequence& clip, const std::string& prompt) override;
};

// Wire contract for a future remote captioner. The clip travels as base64
// LIMF bytes; timeout and retry budgets live in the run configuration.
struct CaptionRequest {
  std::string prompt;
  std::string limf_bytes;  // raw, un-encoded
};
struct CaptionResponse {
  std::string caption;
};

std::string encode_base64(const std::string& bytes);
std::string decode_base64(const std::string& text);  // ContractError when malformed
std::string caption_request_json(const CaptionRequest& request);
CaptionRequest parse_caption_request(const std::string& json_text);
std::string caption_response_json(const CaptionResponse& response);
CaptionResponse parse_caption_response(const std::string& json_text);

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

struct ClipMetadata {
  std::string title;         // must be nonempty
  std::string surgery_type;  // e.g. "robotic", "non-robotic"
};

// Deterministic annotator prompt embedding the title verbatim and enumerating
// the five description aspects; requests a single concise paragraph.
std::string build_caption_prompt(const ClipMetadata& metadata);

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

// One curated clip at rest. confidence defaults to 1 until the confidence
// pass fills it; it must stay within (0, 1].
struct ManifestRecord {
  std::string clip_id;
  std::string source_id;
  double start_s = 0.0;
  double end_s = 0.0;
  double sharpness = 0.0;
  std::string caption;
  double confidence = 1.0;
};

// Keep records whose sharpness is at least the threshold, preserving order.
std::vector<ManifestRecord> prune_blurred(const std::vector<ManifestRecord>& records,
                                          double threshold);

// JSON-lines manifest with keys exactly matching the field names above.
void write_manifest(std::ostream& out, const std::vector<ManifestRecord>& records);
void write_manifest_file(const std::string& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(std::istream& in);
std::vector<ManifestRecord> read_manifest_file(const std::string& path);

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

// One ingestion unit: a raw frame sequence plus the metadata the captioner
// prompt needs.
struct SourceVideo {
  std::string source_id;
  ClipMetadata metadata;
  FrameSequence video;
};

struct PipelineConfig {
  std::size_t target_w = 832;
  std::size_t target_h = 480;
  double window_s = 5.0;
  double stride_s = 2.0;
  double min_shot_s = 5.0;
  double sharpness_threshold = 100.0;
  int sharpness_samples = 3;  // evenly spaced frames averaged per clip
};

struct PipelineResult {
  std::vector<ManifestRecord> manifest;
  std::size_t clips_considered = 0;
  std::size_t pruned_blurred = 0;
  std::size_t caption_failures = 0;
  std::vector<std::string> log;
};

// Standardize -> detect shots -> prune short shots -> window -> sharpness
// prune -> caption -> manifest, in source order then time order. Provider
// failures skip the clip, append to the log, and leave the rest intact.
// The records' confidence fields are left at 1; a later pass fills them.
PipelineResult run_pipeline(const std::vector<SourceVideo>& sources,
                            ShotBoundaryProvider& shots, CaptionProvider& captions,
                            const PipelineConfig& config = {});

// The standardized frames of one windowed clip: frame i belongs to
// [start_s, end_s) when start_s <= i / fps < end_s.
FrameSequence slice_clip(const FrameSequence& video, double start_s, double end_s);

// Mean laplacian_sharpness over `samples` evenly spaced frames (first,
// middle, last for 3) of the clip, after grayscale conversion.
double clip_sharpness(const FrameSequence& clip, int samples = 3);

}  // namespace lim
