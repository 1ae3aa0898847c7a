#include "lim/datapipe.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>
#include <sstream>

namespace lim {
namespace {

constexpr char kLimfMagic[4] = {'L', 'I', 'M', 'F'};
constexpr std::size_t kLimfHeaderBytes = 25;
constexpr std::size_t kMaxExtent = 1u << 20;  // implausibility guard for headers

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

std::uint32_t read_u32(const std::string& bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  return v;
}

double read_f64(const std::string& bytes, std::size_t at) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) {
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  }
  double v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp<long long>(std::llround(v), 0, 255));
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

// --- frames ----------------------------------------------------------------------

Frame::Frame(std::size_t width_in, std::size_t height_in, int channels_in)
    : width(width_in), height(height_in), channels(channels_in) {
  if (width == 0 || height == 0) throw DomainError("frame extents must be positive");
  if (channels != 1 && channels != 3) throw DomainError("frame channels must be 1 or 3");
  pixels.assign(width * height * static_cast<std::size_t>(channels), 0);
}

std::uint8_t& Frame::at(std::size_t row, std::size_t col, int channel) {
  return pixels[(row * width + col) * static_cast<std::size_t>(channels) +
                static_cast<std::size_t>(channel)];
}

std::uint8_t Frame::at(std::size_t row, std::size_t col, int channel) const {
  return pixels[(row * width + col) * static_cast<std::size_t>(channels) +
                static_cast<std::size_t>(channel)];
}

std::string serialize_limf(const FrameSequence& seq) {
  if (!(seq.fps > 0.0) || !std::isfinite(seq.fps)) {
    throw DomainError("frame sequence fps must be positive and finite");
  }
  const std::size_t w = seq.width();
  const std::size_t h = seq.height();
  const int c = seq.channels();
  const std::size_t frame_bytes = w * h * static_cast<std::size_t>(c);
  for (const Frame& f : seq.frames) {
    if (f.width != w || f.height != h || f.channels != c) {
      throw ContractError("frame sequence mixes frame geometries");
    }
    if (f.pixels.size() != frame_bytes) {
      throw ContractError("frame pixel buffer does not match its extents");
    }
  }

  std::string out;
  out.reserve(kLimfHeaderBytes + frame_bytes * seq.frames.size());
  out.append(kLimfMagic, 4);
  append_u32(out, static_cast<std::uint32_t>(w));
  append_u32(out, static_cast<std::uint32_t>(h));
  out.push_back(static_cast<char>(c));
  append_u32(out, static_cast<std::uint32_t>(seq.frames.size()));
  append_f64(out, seq.fps);
  for (const Frame& f : seq.frames) {
    out.append(reinterpret_cast<const char*>(f.pixels.data()), f.pixels.size());
  }
  return out;
}

FrameSequence parse_limf(const std::string& bytes) {
  if (bytes.size() < kLimfHeaderBytes) throw IoError("frame file shorter than its header");
  if (std::memcmp(bytes.data(), kLimfMagic, 4) != 0) {
    throw IoError("frame file magic is not LIMF");
  }
  const std::size_t w = read_u32(bytes, 4);
  const std::size_t h = read_u32(bytes, 8);
  const int c = static_cast<unsigned char>(bytes[12]);
  const std::size_t count = read_u32(bytes, 13);
  const double fps = read_f64(bytes, 17);
  if (c != 1 && c != 3) throw IoError("frame file channels must be 1 or 3");
  if (!(fps > 0.0) || !std::isfinite(fps)) throw IoError("frame file fps must be positive");
  if (w > kMaxExtent || h > kMaxExtent || count > kMaxExtent) {
    throw IoError("frame file header is implausibly large");
  }
  if (count > 0 && (w == 0 || h == 0)) throw IoError("frame file extents must be positive");

  const std::size_t frame_bytes = w * h * static_cast<std::size_t>(c);
  if (bytes.size() != kLimfHeaderBytes + frame_bytes * count) {
    throw IoError("frame file length does not match its header");
  }

  FrameSequence seq;
  seq.fps = fps;
  seq.frames.reserve(count);
  std::size_t at = kLimfHeaderBytes;
  for (std::size_t i = 0; i < count; ++i) {
    Frame f(w, h, c);
    std::memcpy(f.pixels.data(), bytes.data() + at, frame_bytes);
    seq.frames.push_back(std::move(f));
    at += frame_bytes;
  }
  return seq;
}

void write_limf_file(const std::string& path, const FrameSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  const std::string bytes = serialize_limf(seq);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path);
}

FrameSequence read_limf_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path);
  return parse_limf(buffer.str());
}

// --- frame operations ------------------------------------------------------------

StandardizedGeometry standardized_geometry(std::size_t width, std::size_t height,
                                           std::size_t target_w, std::size_t target_h) {
  if (width == 0 || height == 0) throw DomainError("frame extents must be positive");
  if (target_w == 0 || target_h == 0) throw DomainError("target extents must be positive");

  StandardizedGeometry g;
  if (width <= height) {
    g.scaled_w = target_w;
    g.scaled_h = static_cast<std::size_t>(std::llround(
        static_cast<double>(height) * static_cast<double>(target_w) / static_cast<double>(width)));
  } else {
    g.scaled_h = target_h;
    g.scaled_w = static_cast<std::size_t>(std::llround(
        static_cast<double>(width) * static_cast<double>(target_h) / static_cast<double>(height)));
  }
  if (g.scaled_w < target_w || g.scaled_h < target_h) {
    throw StandardizationError("aspect ratio " + std::to_string(width) + "x" +
                               std::to_string(height) + " cannot cover " +
                               std::to_string(target_w) + "x" + std::to_string(target_h));
  }
  g.offset_x = (g.scaled_w - target_w) / 2;
  g.offset_y = (g.scaled_h - target_h) / 2;
  return g;
}

Frame standardize_frame(const Frame& f, std::size_t target_w, std::size_t target_h) {
  if (f.channels != 1 && f.channels != 3) throw DomainError("frame channels must be 1 or 3");
  if (f.pixels.size() != f.width * f.height * static_cast<std::size_t>(f.channels)) {
    throw ContractError("frame pixel buffer does not match its extents");
  }
  const StandardizedGeometry g = standardized_geometry(f.width, f.height, target_w, target_h);

  // Sample positions use half-pixel centers with edge clamping, so an identity
  // geometry degenerates to an exact copy. Only cropped pixels are sampled.
  const double ratio_x = static_cast<double>(f.width) / static_cast<double>(g.scaled_w);
  const double ratio_y = static_cast<double>(f.height) / static_cast<double>(g.scaled_h);
  std::vector<std::size_t> x0(target_w), x1(target_w);
  std::vector<double> tx(target_w);
  for (std::size_t x = 0; x < target_w; ++x) {
    double gx = (static_cast<double>(x + g.offset_x) + 0.5) * ratio_x - 0.5;
    gx = std::clamp(gx, 0.0, static_cast<double>(f.width - 1));
    x0[x] = static_cast<std::size_t>(gx);
    x1[x] = std::min(x0[x] + 1, f.width - 1);
    tx[x] = gx - static_cast<double>(x0[x]);
  }

  Frame out(target_w, target_h, f.channels);
  for (std::size_t y = 0; y < target_h; ++y) {
    double gy = (static_cast<double>(y + g.offset_y) + 0.5) * ratio_y - 0.5;
    gy = std::clamp(gy, 0.0, static_cast<double>(f.height - 1));
    const std::size_t y0 = static_cast<std::size_t>(gy);
    const std::size_t y1 = std::min(y0 + 1, f.height - 1);
    const double ty = gy - static_cast<double>(y0);
    for (std::size_t x = 0; x < target_w; ++x) {
      for (int ch = 0; ch < f.channels; ++ch) {
        const double p00 = f.at(y0, x0[x], ch);
        const double p01 = f.at(y0, x1[x], ch);
        const double p10 = f.at(y1, x0[x], ch);
        const double p11 = f.at(y1, x1[x], ch);
        const double top = p00 + tx[x] * (p01 - p00);
        const double bottom = p10 + tx[x] * (p11 - p10);
        out.at(y, x, ch) = to_u8(top + ty * (bottom - top));
      }
    }
  }
  return out;
}

Frame to_grayscale(const Frame& f) {
  if (f.channels == 1) return f;
  Frame out(f.width, f.height, 1);
  for (std::size_t y = 0; y < f.height; ++y) {
    for (std::size_t x = 0; x < f.width; ++x) {
      out.at(y, x) = to_u8(0.299 * f.at(y, x, 0) + 0.587 * f.at(y, x, 1) +
                           0.114 * f.at(y, x, 2));
    }
  }
  return out;
}

double laplacian_sharpness(const Frame& gray) {
  if (gray.channels != 1) throw DomainError("sharpness expects a single-channel frame");
  if (gray.width < 3 || gray.height < 3) {
    throw DomainError("sharpness needs at least a 3x3 frame");
  }
  std::vector<double> responses;
  responses.reserve((gray.width - 2) * (gray.height - 2));
  for (std::size_t y = 1; y + 1 < gray.height; ++y) {
    for (std::size_t x = 1; x + 1 < gray.width; ++x) {
      const double r = static_cast<double>(gray.at(y - 1, x)) + gray.at(y + 1, x) +
                       gray.at(y, x - 1) + gray.at(y, x + 1) - 4.0 * gray.at(y, x);
      responses.push_back(r);
    }
  }
  double mean = 0.0;
  for (double r : responses) mean += r;
  mean /= static_cast<double>(responses.size());
  double var = 0.0;
  for (double r : responses) var += (r - mean) * (r - mean);
  return var / static_cast<double>(responses.size());
}

// --- shots and windows -----------------------------------------------------------

std::vector<ShotSpan> shots_from_cuts(double duration_s, const std::vector<double>& cuts) {
  if (!(duration_s > 0.0)) throw DomainError("video duration must be positive");
  double prev = 0.0;
  std::vector<ShotSpan> shots;
  for (double cut : cuts) {
    if (cut <= prev || cut >= duration_s) {
      throw ContractError("cut timestamps must be ascending and strictly inside the video");
    }
    shots.push_back({prev, cut});
    prev = cut;
  }
  shots.push_back({prev, duration_s});
  return shots;
}

std::vector<ShotSpan> prune_short_shots(const std::vector<ShotSpan>& shots, double min_len_s) {
  std::vector<ShotSpan> kept;
  for (const ShotSpan& s : shots) {
    if (s.length_s() >= min_len_s) kept.push_back(s);
  }
  return kept;
}

std::vector<ShotSpan> window_clips(const ShotSpan& shot, double window_s, double stride_s) {
  if (!(window_s > 0.0) || !(stride_s > 0.0)) {
    throw DomainError("window and stride must be positive");
  }
  if (shot.length_s() < window_s - 1e-9) {
    throw ContractError("shot of " + std::to_string(shot.length_s()) +
                        " s is shorter than one window; it should have been pruned");
  }
  std::vector<ShotSpan> windows;
  for (std::size_t k = 0;; ++k) {
    const double start = shot.start_s + static_cast<double>(k) * stride_s;
    if (start + window_s > shot.end_s + 1e-9) break;
    windows.push_back({start, start + window_s});
  }
  return windows;
}

// --- providers -------------------------------------------------------------------

HistogramShotProvider::HistogramShotProvider(double l1_threshold)
    : l1_threshold_(l1_threshold) {
  if (!(l1_threshold > 0.0)) throw DomainError("histogram threshold must be positive");
}

std::vector<double> HistogramShotProvider::boundaries(const FrameSequence& video) {
  std::vector<double> cuts;
  if (video.frames.size() < 2 || !(video.fps > 0.0)) return cuts;

  auto histogram = [](const Frame& f) {
    std::array<double, 64> bins{};
    const Frame gray = to_grayscale(f);
    for (std::uint8_t v : gray.pixels) bins[v >> 2] += 1.0;
    const double n = static_cast<double>(gray.pixels.size());
    for (double& b : bins) b /= n;
    return bins;
  };

  std::array<double, 64> prev = histogram(video.frames[0]);
  for (std::size_t i = 1; i < video.frames.size(); ++i) {
    const std::array<double, 64> cur = histogram(video.frames[i]);
    double l1 = 0.0;
    for (std::size_t b = 0; b < 64; ++b) l1 += std::fabs(cur[b] - prev[b]);
    if (l1 > l1_threshold_) {
      cuts.push_back(static_cast<double>(i) / video.fps);
    }
    prev = cur;
  }
  return cuts;
}

std::string MockCaptionProvider::caption(const FrameSequence& clip, const std::string& prompt) {
  std::uint64_t h = 14695981039346656037ull;
  h = fnv1a(h, prompt.data(), prompt.size());
  for (const Frame& f : clip.frames) h = fnv1a(h, f.pixels.data(), f.pixels.size());
  char buf[96];
  std::snprintf(buf, sizeof buf, "synthetic caption %016llx over %zu frames",
                static_cast<unsigned long long>(h), clip.frames.size());
  return buf;
}

// --- caption wire contract -------------------------------------------------------

namespace {
constexpr char kBase64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int base64_value(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}
}  // namespace

std::string encode_base64(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                            static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out.push_back(kBase64Alphabet[(v >> 6) & 63]);
    out.push_back(kBase64Alphabet[v & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out.push_back(kBase64Alphabet[(v >> 18) & 63]);
    out.push_back(kBase64Alphabet[(v >> 12) & 63]);
    out.push_back(kBase64Alphabet[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::string decode_base64(const std::string& text) {
  if (text.size() % 4 != 0) throw ContractError("base64 length must be a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int vals[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=') {
        // Padding is only legal in the last two positions of the final group.
        if (i + 4 != text.size() || k < 2) throw ContractError("misplaced base64 padding");
        vals[k] = 0;
        ++pad;
      } else {
        if (pad > 0) throw ContractError("base64 data after padding");
        vals[k] = base64_value(c);
        if (vals[k] < 0) throw ContractError(std::string("invalid base64 character '") + c + "'");
      }
    }
    const std::uint32_t v = (static_cast<std::uint32_t>(vals[0]) << 18) |
                            (static_cast<std::uint32_t>(vals[1]) << 12) |
                            (static_cast<std::uint32_t>(vals[2]) << 6) |
                            static_cast<std::uint32_t>(vals[3]);
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<char>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

std::string caption_request_json(const CaptionRequest& request) {
  nlohmann::json j;
  j["prompt"] = request.prompt;
  j["clip_limf_base64"] = encode_base64(request.limf_bytes);
  return j.dump();
}

CaptionRequest parse_caption_request(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("prompt") ||
      !j.contains("clip_limf_base64") || !j["prompt"].is_string() ||
      !j["clip_limf_base64"].is_string()) {
    throw ContractError("malformed caption request");
  }
  return {j["prompt"].get<std::string>(),
          decode_base64(j["clip_limf_base64"].get<std::string>())};
}

std::string caption_response_json(const CaptionResponse& response) {
  nlohmann::json j;
  j["caption"] = response.caption;
  return j.dump();
}

CaptionResponse parse_caption_response(const std::string& json_text) {
  nlohmann::json j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("caption") ||
      !j["caption"].is_string()) {
    throw ContractError("malformed caption response");
  }
  return {j["caption"].get<std::string>()};
}

// --- prompts ---------------------------------------------------------------------

std::string build_caption_prompt(const ClipMetadata& metadata) {
  if (metadata.title.empty()) throw DomainError("caption prompt needs a nonempty title");
  std::string out = "You will act as a professional medical annotator. Watch the surgical "
                    "video clip titled \"" + metadata.title + "\"";
  if (!metadata.surgery_type.empty()) {
    out += " (" + metadata.surgery_type + " surgery)";
  }
  out += " and describe what it shows, focusing on: "
         "(1) Field of view (circular vs. rectangular) and surgery type "
         "(robotic vs. non-robotic); "
         "(2) Surgical instruments utilized; "
         "(3) Anatomical structures and involved tissues; "
         "(4) Step-by-step actions and procedural maneuvers; "
         "(5) Camera perspective and lighting conditions. "
         "Format the final output as a single, concise paragraph.";
  return out;
}

// --- manifest --------------------------------------------------------------------

namespace {
void validate_record(const ManifestRecord& r) {
  if (!(r.confidence > 0.0) || r.confidence > 1.0) {
    throw ContractError("manifest record " + r.clip_id + " confidence must lie in (0, 1]");
  }
  if (!(r.sharpness >= 0.0)) {
    throw ContractError("manifest record " + r.clip_id + " sharpness must be nonnegative");
  }
}
}  // namespace

std::vector<ManifestRecord> prune_blurred(const std::vector<ManifestRecord>& records,
                                          double threshold) {
  std::vector<ManifestRecord> kept;
  for (const ManifestRecord& r : records) {
    if (r.sharpness >= threshold) kept.push_back(r);
  }
  return kept;
}

void write_manifest(std::ostream& out, const std::vector<ManifestRecord>& records) {
  for (const ManifestRecord& r : records) {
    validate_record(r);
    nlohmann::json j;
    j["clip_id"] = r.clip_id;
    j["source_id"] = r.source_id;
    j["start_s"] = r.start_s;
    j["end_s"] = r.end_s;
    j["sharpness"] = r.sharpness;
    j["caption"] = r.caption;
    j["confidence"] = r.confidence;
    out << j.dump() << '\n';
  }
  if (!out) throw IoError("manifest write failed");
}

void write_manifest_file(const std::string& path, const std::vector<ManifestRecord>& records) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  write_manifest(out, records);
}

std::vector<ManifestRecord> read_manifest(std::istream& in) {
  static const std::vector<std::string> kKeys = {
      "clip_id", "source_id", "start_s", "end_s", "sharpness", "caption", "confidence"};
  std::vector<ManifestRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw ContractError("manifest line " + std::to_string(lineno) + " is not a JSON object");
    }
    for (const std::string& key : kKeys) {
      if (!j.contains(key)) {
        throw ContractError("manifest line " + std::to_string(lineno) + " is missing " + key);
      }
    }
    if (j.size() != kKeys.size()) {
      throw ContractError("manifest line " + std::to_string(lineno) + " has unexpected keys");
    }
    if (!j["clip_id"].is_string() || !j["source_id"].is_string() || !j["caption"].is_string() ||
        !j["start_s"].is_number() || !j["end_s"].is_number() || !j["sharpness"].is_number() ||
        !j["confidence"].is_number()) {
      throw ContractError("manifest line " + std::to_string(lineno) + " has wrong value types");
    }
    ManifestRecord r;
    r.clip_id = j["clip_id"].get<std::string>();
    r.source_id = j["source_id"].get<std::string>();
    r.start_s = j["start_s"].get<double>();
    r.end_s = j["end_s"].get<double>();
    r.sharpness = j["sharpness"].get<double>();
    r.caption = j["caption"].get<std::string>();
    r.confidence = j["confidence"].get<double>();
    validate_record(r);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<ManifestRecord> read_manifest_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return read_manifest(in);
}

// --- pipeline --------------------------------------------------------------------

FrameSequence slice_clip(const FrameSequence& video, double start_s, double end_s) {
  FrameSequence clip;
  clip.fps = video.fps;
  if (!(video.fps > 0.0) || end_s <= start_s) return clip;
  const auto first = static_cast<std::size_t>(
      std::max(0.0, std::ceil(start_s * video.fps - 1e-9)));
  const auto stop = static_cast<std::size_t>(
      std::max(0.0, std::ceil(end_s * video.fps - 1e-9)));
  for (std::size_t i = first; i < stop && i < video.frames.size(); ++i) {
    clip.frames.push_back(video.frames[i]);
  }
  return clip;
}

double clip_sharpness(const FrameSequence& clip, int samples) {
  if (clip.frames.empty()) throw DomainError("sharpness of an empty clip");
  if (samples < 1) throw DomainError("sharpness needs at least one sample frame");
  const std::size_t n = clip.frames.size();
  double total = 0.0;
  for (int j = 0; j < samples; ++j) {
    const std::size_t idx =
        samples == 1 ? 0
                     : static_cast<std::size_t>(std::llround(
                           static_cast<double>(j) * static_cast<double>(n - 1) /
                           static_cast<double>(samples - 1)));
    total += laplacian_sharpness(to_grayscale(clip.frames[idx]));
  }
  return total / static_cast<double>(samples);
}

PipelineResult run_pipeline(const std::vector<SourceVideo>& sources,
                            ShotBoundaryProvider& shots, CaptionProvider& captions,
                            const PipelineConfig& config) {
  if (config.target_w == 0 || config.target_h == 0 || !(config.window_s > 0.0) ||
      !(config.stride_s > 0.0) || !(config.min_shot_s >= config.window_s) ||
      !(config.sharpness_threshold >= 0.0) || config.sharpness_samples < 1) {
    throw DomainError("pipeline configuration is out of range");
  }

  PipelineResult result;
  for (const SourceVideo& source : sources) {
    if (source.video.frames.empty() || !(source.video.fps > 0.0)) {
      result.log.push_back("skipping source " + source.source_id + ": no usable frames");
      continue;
    }

    FrameSequence standardized;
    standardized.fps = source.video.fps;
    try {
      for (const Frame& f : source.video.frames) {
        standardized.frames.push_back(standardize_frame(f, config.target_w, config.target_h));
      }
    } catch (const StandardizationError& e) {
      result.log.push_back("skipping source " + source.source_id + ": " + e.what());
      continue;
    }

    const std::vector<double> cuts = shots.boundaries(standardized);
    const std::vector<ShotSpan> all_shots =
        shots_from_cuts(standardized.duration_s(), cuts);
    const std::vector<ShotSpan> kept_shots = prune_short_shots(all_shots, config.min_shot_s);
    result.log.push_back("source " + source.source_id + ": " +
                         std::to_string(all_shots.size()) + " shots, " +
                         std::to_string(kept_shots.size()) + " of usable length");

    const std::string prompt = build_caption_prompt(source.metadata);
    std::size_t clip_index = 0;
    for (const ShotSpan& shot : kept_shots) {
      for (const ShotSpan& window : window_clips(shot, config.window_s, config.stride_s)) {
        char suffix[16];
        std::snprintf(suffix, sizeof suffix, "_c%05zu", clip_index++);
        const std::string clip_id = source.source_id + suffix;
        ++result.clips_considered;

        const FrameSequence clip = slice_clip(standardized, window.start_s, window.end_s);
        if (clip.frames.empty()) {
          result.log.push_back("skipping " + clip_id + ": window holds no frames");
          continue;
        }
        const double sharpness = clip_sharpness(clip, config.sharpness_samples);
        if (sharpness < config.sharpness_threshold) {
          ++result.pruned_blurred;
          result.log.push_back("pruning " + clip_id + ": sharpness " +
                               std::to_string(sharpness) + " below threshold");
          continue;
        }

        ManifestRecord record;
        record.clip_id = clip_id;
        record.source_id = source.source_id;
        record.start_s = window.start_s;
        record.end_s = window.end_s;
        record.sharpness = sharpness;
        try {
          record.caption = captions.caption(clip, prompt);
        } catch (const std::exception& e) {
          ++result.caption_failures;
          result.log.push_back("caption failed for " + clip_id + ": " + e.what());
          continue;
        }
        result.manifest.push_back(std::move(record));
      }
    }
  }
  return result;
}

}  // namespace lim
