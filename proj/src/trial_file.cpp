#include "eegadapt/trial_file.hpp"

#include <json.hpp>

#include "binary_io.hpp"
#include "eegadapt/error.hpp"

namespace eegadapt {

namespace {

constexpr std::string_view kMagic = "EEGT";

nlohmann::json header_json(const TrialFileHeader& h) {
  nlohmann::json j;
  j["subject_id"] = h.subject_id;
  j["session_id"] = h.session_id;
  j["channels"] = h.channels;
  j["samples"] = h.samples;
  j["fs"] = h.fs;
  j["num_classes"] = h.num_classes;
  j["n_trials"] = h.n_trials;
  nlohmann::json p = nlohmann::json::object();
  p["highpass_hz"] = h.preprocessing.highpass_hz ? nlohmann::json(*h.preprocessing.highpass_hz)
                                                 : nlohmann::json(nullptr);
  p["resampled_from_hz"] = h.preprocessing.resampled_from_hz
                               ? nlohmann::json(*h.preprocessing.resampled_from_hz)
                               : nlohmann::json(nullptr);
  j["preprocessing"] = p;
  return j;
}

template <class T>
T field(const nlohmann::json& j, const char* key, std::size_t offset) {
  if (!j.contains(key)) throw FormatError(std::string("header.") + key, offset, "missing");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("header.") + key, offset, e.what());
  }
}

std::optional<double> optional_field(const nlohmann::json& j, const char* key, std::size_t offset) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  if (!j.at(key).is_number())
    throw FormatError(std::string("header.preprocessing.") + key, offset, "not a number");
  return j.at(key).get<double>();
}

}  // namespace

std::string header_to_json(const TrialFileHeader& h) { return header_json(h).dump(2); }

std::vector<std::uint8_t> encode_trial_file(const Session& session, const Preprocessing& prep) {
  if (session.trials.empty()) throw InvalidArgument("trial file: session has no trials");
  TrialFileHeader h;
  h.subject_id = session.subject_id;
  h.session_id = session.session_id;
  h.channels = session.trials.front().channels();
  h.samples = session.trials.front().samples();
  h.fs = session.fs;
  h.num_classes = session.num_classes;
  h.n_trials = session.trials.size();
  h.preprocessing = prep;
  for (const auto& t : session.trials) {
    if (t.channels() != h.channels || t.samples() != h.samples)
      throw InvalidArgument("trial file: trials of a session must share their shape");
    if (t.label && (*t.label < 0 || *t.label >= h.num_classes))
      throw InvalidArgument("trial file: label " + std::to_string(*t.label) + " out of range");
  }

  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kTrialFileVersion);
  const std::string text = header_json(h).dump();
  w.u32(static_cast<std::uint32_t>(text.size()));
  w.bytes(text);
  for (const auto& t : session.trials) w.i32(t.label ? *t.label : -1);
  for (const auto& t : session.trials) w.f32s(t.data.values());
  return w.take();
}

LoadedSession decode_trial_file(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(4, "magic") != kMagic) throw FormatError("magic", 0, "not an EEGT trial file");
  const std::uint32_t version = r.u32("version");
  if (version != kTrialFileVersion)
    throw FormatError("version", 4, "unsupported version " + std::to_string(version));
  const std::uint32_t header_len = r.u32("header_length");
  const std::size_t hoff = r.offset();
  const std::string text = r.bytes(header_len, "header");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("header", hoff, e.what());
  }

  LoadedSession out;
  TrialFileHeader& h = out.header;
  h.subject_id = field<int>(j, "subject_id", hoff);
  h.session_id = field<int>(j, "session_id", hoff);
  const auto channels = field<long long>(j, "channels", hoff);
  const auto samples = field<long long>(j, "samples", hoff);
  const auto n_trials = field<long long>(j, "n_trials", hoff);
  h.fs = field<double>(j, "fs", hoff);
  h.num_classes = field<int>(j, "num_classes", hoff);
  if (channels < 1) throw FormatError("header.channels", hoff, "must be >= 1");
  if (samples < 1) throw FormatError("header.samples", hoff, "must be >= 1");
  if (n_trials < 0) throw FormatError("header.n_trials", hoff, "must be >= 0");
  if (h.num_classes < 1) throw FormatError("header.num_classes", hoff, "must be >= 1");
  if (!(h.fs > 0.0)) throw FormatError("header.fs", hoff, "must be positive");
  h.channels = static_cast<std::size_t>(channels);
  h.samples = static_cast<std::size_t>(samples);
  h.n_trials = static_cast<std::size_t>(n_trials);
  if (j.contains("preprocessing")) {
    const auto& p = j["preprocessing"];
    if (!p.is_object()) throw FormatError("header.preprocessing", hoff, "not an object");
    h.preprocessing.highpass_hz = optional_field(p, "highpass_hz", hoff);
    h.preprocessing.resampled_from_hz = optional_field(p, "resampled_from_hz", hoff);
  }

  const std::size_t expected = r.offset() + 4 * h.n_trials + 4 * h.n_trials * h.channels * h.samples;
  if (expected != bytes.size()) {
    if (bytes.size() > expected) {
      throw FormatError("end_of_file", expected,
                        std::to_string(bytes.size() - expected) + " unexpected trailing bytes");
    }
  }

  Session& s = out.session;
  s.subject_id = h.subject_id;
  s.session_id = h.session_id;
  s.fs = h.fs;
  s.num_classes = h.num_classes;
  std::vector<int> labels(h.n_trials);
  for (std::size_t i = 0; i < h.n_trials; ++i) {
    const std::size_t at = r.offset();
    labels[i] = r.i32("labels[" + std::to_string(i) + "]");
    if (labels[i] < -1 || labels[i] >= h.num_classes)
      throw FormatError("labels[" + std::to_string(i) + "]", at,
                        "label " + std::to_string(labels[i]) + " out of range");
  }
  s.trials.resize(h.n_trials);
  for (std::size_t i = 0; i < h.n_trials; ++i) {
    Trial& t = s.trials[i];
    t.subject_id = h.subject_id;
    t.session_id = h.session_id;
    t.index_in_session = static_cast<int>(i);
    if (labels[i] >= 0) t.label = labels[i];
    t.data = Matrix(h.channels, h.samples);
    r.f32s(t.data.values(), "data[" + std::to_string(i) + "]");
  }
  return out;
}

void save_trial_file(const std::filesystem::path& path, const Session& session,
                     const Preprocessing& prep) {
  detail::write_file(path, encode_trial_file(session, prep));
}

LoadedSession load_trial_file(const std::filesystem::path& path) {
  return decode_trial_file(detail::read_file(path));
}

}  // namespace eegadapt
