// Copyright 2026 The foaenc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Pipeline commands behind the `foaenc` tool: simulate, design-baseline,
// encode and evaluate.

#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "foaenc/common.hpp"
#include "foaenc/dataset.hpp"
#include "foaenc/encoder.hpp"
#include "foaenc/evalmetrics.hpp"
#include "foaenc/scenegen.hpp"
#include "foaenc/shmath.hpp"
#include "foaenc/tfcore.hpp"
#include "foaenc/wav.hpp"

namespace foaenc {

struct RunConfig {
  std::uint64_t seed = 0;
  int jobs = 1;
  bool force = false;
  std::string array = "tetra";  // tetra | irregular | path to JSON
  std::size_t scenes = 100;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  STFTConfig stft;
  SceneRanges ranges;
  double scene_seconds = 2.0;
  int order = 1;
  double gain_cap_db = 15.0;
  LossWeights loss_weights = LossWeights::defaults();
  std::string corpus;  // optional directory of mono wavs

  /// Overrides fields present in a JSON config object.
  void merge_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error("config must be a JSON object");
    seed = j.value("seed", seed);
    jobs = j.value("jobs", jobs);
    array = j.value("array", array);
    scenes = j.value("scenes", scenes);
    scene_seconds = j.value("scene_seconds", scene_seconds);
    order = j.value("order", order);
    gain_cap_db = j.value("gain_cap_db", gain_cap_db);
    corpus = j.value("corpus", corpus);
    if (j.contains("split_ratios")) {
      split_ratios = j.at("split_ratios").get<std::array<double, 3>>();
    }
    if (j.contains("stft")) {
      const auto& s = j.at("stft");
      stft.fft_size = s.value("fft_size", stft.fft_size);
      stft.hop = s.value("hop", stft.hop);
      stft.sample_rate = s.value("sample_rate", stft.sample_rate);
    }
    if (j.contains("room")) {
      const auto& r = j.at("room");
      if (r.contains("min_dimensions")) {
        ranges.min_dimensions = json_vec(r.at("min_dimensions"));
      }
      if (r.contains("max_dimensions")) {
        ranges.max_dimensions = json_vec(r.at("max_dimensions"));
      }
      ranges.min_absorption = r.value("min_absorption", ranges.min_absorption);
      ranges.max_absorption = r.value("max_absorption", ranges.max_absorption);
      ranges.max_image_order =
          r.value("max_image_order", ranges.max_image_order);
      ranges.min_sources = r.value("min_sources", ranges.min_sources);
      ranges.max_sources = r.value("max_sources", ranges.max_sources);
    }
    if (j.contains("loss_weights")) {
      loss_weights = loss_weights_from_json(j.at("loss_weights"));
    }
  }

  void validate() const {
    if (jobs < 1) throw Error("--jobs must be >= 1");
    if (order < 0) throw Error("order must be >= 0");
    if (!(scene_seconds > 0.0)) throw Error("scene_seconds must be positive");
    if (!(gain_cap_db > 0.0)) throw Error("gain cap must be positive");
    if (stft.hop == 0 || stft.hop > stft.fft_size || stft.fft_size % 2) {
      throw Error("invalid STFT configuration");
    }
    if (!(stft.sample_rate > 0.0)) throw Error("sample rate must be positive");
    split_counts(1, split_ratios);
  }
};

namespace detail {

/// Runs fn(i) for i in [0, count) on `jobs` threads; rethrows the first
/// failure after all workers stop.
template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  const auto n = static_cast<std::size_t>(std::max(1, jobs));
  if (n == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < std::min(n, count); ++t) {
      threads.emplace_back(worker);
    }
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::vector<fs::path> corpus_files(const std::string& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".wav") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error("no .wav files in corpus " + dir);
  return files;
}

inline std::string file_hash(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)),
                          std::istreambuf_iterator<char>());
  return hex64(fnv1a64(bytes.data(), bytes.size()));
}

inline std::string samples_hash(const std::vector<double>& samples) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (double v : samples) {
    const float f = static_cast<float>(v);
    h = fnv1a64(&f, sizeof f, h);
  }
  return hex64(h);
}

inline bool directory_has_entries(const fs::path& dir) {
  return fs::is_directory(dir) && fs::directory_iterator(dir) != fs::directory_iterator();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// simulate

struct SimulateSummary {
  std::array<std::size_t, 3> split_counts{};
  std::size_t scenes = 0;
};

inline SimulateSummary cmd_simulate(const RunConfig& config,
                                    const fs::path& out_dir,
                                    std::ostream& log) {
  config.validate();
  if (config.scenes == 0) throw Error("--scenes must be >= 1");
  if (detail::directory_has_entries(out_dir)) {
    if (!config.force) {
      throw Error("output directory " + out_dir.string() +
                  " is not empty (use --force to overwrite)");
    }
    for (const char* split : kSplitNames) fs::remove_all(out_dir / split);
    fs::remove(out_dir / "dataset.json");
  }
  fs::create_directories(out_dir);

  SceneRenderConfig render;
  render.array = named_geometry(config.array);
  render.array.validate();
  render.sh.order = config.order;
  render.sample_rate = config.stft.sample_rate;
  render.scene_seconds = config.scene_seconds;
  const std::string array_name =
      (config.array == "tetra" || config.array == "irregular")
          ? config.array
          : "custom";

  std::vector<fs::path> corpus;
  if (!config.corpus.empty()) corpus = detail::corpus_files(config.corpus);

  const auto counts = split_counts(config.scenes, config.split_ratios);
  auto split_of = [&](std::size_t i) -> std::string {
    if (i < counts[0]) return kSplitNames[0];
    if (i < counts[0] + counts[1]) return kSplitNames[1];
    return kSplitNames[2];
  };
  for (std::size_t s = 0; s < 3; ++s) {
    if (counts[s]) fs::create_directories(out_dir / kSplitNames[s]);
  }

  std::mutex log_mutex;
  detail::parallel_for(config.scenes, config.jobs, [&](std::size_t i) {
    SceneRecord record;
    record.scene_id = scene_id(i);
    record.split = split_of(i);
    record.array = render.array;
    record.array_name = array_name;
    record.sh = render.sh;
    record.sample_rate = render.sample_rate;
    record.scene_seconds = render.scene_seconds;

    const std::uint64_t scene_seed = detail::splitmix64(config.seed + i);
    record.spec = sample_scene_spec(scene_seed, config.ranges);

    std::vector<MonoSignal> signals;
    for (std::size_t s = 0; s < record.spec.source_positions.size(); ++s) {
      const std::uint64_t src_seed =
          detail::splitmix64(scene_seed ^ (0x51ed27ull * (s + 1)));
      if (corpus.empty()) {
        MonoSignal sig = synthetic_source(src_seed, render.scene_samples(),
                                          render.sample_rate);
        record.sources.push_back(
            {"synth:" + hex64(src_seed), detail::samples_hash(sig.samples)});
        signals.push_back(std::move(sig));
      } else {
        const fs::path& file = corpus[src_seed % corpus.size()];
        WavData wav = read_wav(file.string());
        record.sources.push_back(
            {fs::relative(file, config.corpus).generic_string(),
             detail::file_hash(file)});
        signals.push_back({std::move(wav.channels.front()), wav.sample_rate});
      }
      record.spec.source_signal_ids.push_back(record.sources.back().id);
    }

    const SceneAudio audio = synth_scene(record.spec, signals, render);
    const fs::path dir = out_dir / record.split / record.scene_id;
    fs::create_directories(dir);
    write_wav((dir / "mics.wav").string(), audio.mics, render.sample_rate);
    write_wav((dir / "ref_foa.wav").string(), audio.reference,
              render.sample_rate);
    write_json_file(dir / "scene.json", scene_json(record));
    std::lock_guard lock(log_mutex);
    log << "scene " << record.scene_id << " (" << record.split << ")\n";
  });

  write_json_file(out_dir / "dataset.json",
                  {{"format_version", kDatasetFormatVersion},
                   {"seed", config.seed},
                   {"scenes", config.scenes},
                   {"splits",
                    {{"train", counts[0]}, {"val", counts[1]},
                     {"test", counts[2]}}},
                   {"array",
                    {{"name", array_name},
                     {"geometry", geometry_json(render.array)}}},
                   {"sample_rate", render.sample_rate},
                   {"scene_seconds", render.scene_seconds},
                   {"ambisonics",
                    {{"order", render.sh.order},
                     {"ordering", "ACN"},
                     {"normalization", "N3D"}}}});
  return {counts, config.scenes};
}

// ---------------------------------------------------------------------------
// design-baseline

struct DesignSummary {
  double max_row_gain_db = 0.0;
  double aliasing_hz = 0.0;
  std::vector<std::string> warnings;
  BaselineDesign design;
};

inline DesignSummary design_for_config(const RunConfig& config,
                                       const ArrayGeometry& geometry) {
  DesignSummary summary;
  SHConfig sh{config.order};
  BaselineOptions options;
  options.gain_cap_db = config.gain_cap_db;
  if (geometry.size() < sh.channels()) {
    summary.warnings.push_back(
        "array has " + std::to_string(geometry.size()) + " microphones for " +
        std::to_string(sh.channels()) +
        " Ambisonic channels; the design is underdetermined and dominated by "
        "regularization");
  }
  if (geometry.max_radius() > 0.0) {
    options.aliasing_hz = aliasing_frequency(geometry, sh.order);
  } else {
    options.diffuse_eq = false;
    summary.warnings.push_back(
        "array has no spatial extent; diffuse-field equalization disabled");
  }
  summary.aliasing_hz = options.aliasing_hz;
  summary.design =
      design_baseline_for_array(geometry, config.stft, sh, options);
  for (double g : summary.design.max_row_gain_db) {
    summary.max_row_gain_db = std::max(summary.max_row_gain_db, g);
  }
  return summary;
}

inline DesignSummary cmd_design_baseline(const RunConfig& config,
                                         const fs::path& out_path, bool audit,
                                         std::ostream& log) {
  config.validate();
  const ArrayGeometry geometry = named_geometry(config.array);
  geometry.validate();
  DesignSummary summary = design_for_config(config, geometry);
  for (const auto& w : summary.warnings) log << "warning: " << w << '\n';
  write_encoding_matrix(out_path.string(), summary.design.matrix);
  if (audit) {
    log << "aliasing frequency: " << summary.aliasing_hz << " Hz\n";
    log << "max row gain: " << summary.max_row_gain_db << " dB (cap "
        << config.gain_cap_db << " dB)\n";
  }
  return summary;
}

// ---------------------------------------------------------------------------
// encode

namespace detail {

inline std::string file_magic(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  char buf[8] = {};
  is.read(buf, 8);
  return std::string(buf, buf + is.gcount());
}

}  // namespace detail

struct EncodeResult {
  STFTTensor output;
  std::size_t length = 0;  // samples, 0 when the input was a tensor
};

/// Applies an AMBENC1 or AMBTFE1 matrix to a wav or AMBTEN1 input.
inline EncodeResult encode_file(const RunConfig& config,
                                const fs::path& matrix_path,
                                const fs::path& input_path) {
  STFTTensor x;
  std::size_t length = 0;
  const std::string in_magic = detail::file_magic(input_path);
  if (in_magic.rfind("RIFF", 0) == 0) {
    const WavData wav = read_wav(input_path.string());
    STFTConfig stft_config = config.stft;
    stft_config.sample_rate = wav.sample_rate;
    x = stft(wav.channels, stft_config);
    length = wav.frames();
  } else {
    x = read_tensor(input_path.string(), config.stft.sample_rate);
  }

  const std::string m_magic = detail::file_magic(matrix_path);
  EncodeResult result;
  if (m_magic == std::string(kEncodingMagic, 8)) {
    const EncodingMatrix m = read_encoding_matrix(matrix_path.string());
    if (length && m.sample_rate != x.config().sample_rate) {
      throw Error("matrix sample rate does not match the input");
    }
    result.output = apply_static(m, x);
  } else if (m_magic == std::string(kTFEncodingMagic, 8)) {
    const TFEncodingMatrix m = read_tf_encoding_matrix(matrix_path.string());
    if (length && m.sample_rate != x.config().sample_rate) {
      throw Error("matrix sample rate does not match the input");
    }
    result.output = apply_tf(m, x);
  } else {
    throw Error(matrix_path.string() + " is neither AMBENC1 nor AMBTFE1");
  }
  result.length = length;
  return result;
}

inline void cmd_encode(const RunConfig& config, const fs::path& matrix_path,
                       const fs::path& input_path,
                       const std::optional<fs::path>& out_wav,
                       const std::optional<fs::path>& out_tensor) {
  config.validate();
  if (!out_wav && !out_tensor) {
    throw Error("encode needs --out and/or --tensor-out");
  }
  const EncodeResult r = encode_file(config, matrix_path, input_path);
  if (out_tensor) write_tensor(out_tensor->string(), r.output);
  if (out_wav) {
    const std::size_t length =
        r.length ? r.length : (r.output.frames() - 1) * r.output.config().hop;
    write_wav(out_wav->string(), istft(r.output, length),
              r.output.config().sample_rate);
  }
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateSummary {
  std::size_t scenes = 0;
  MetricsReport baseline;
  std::optional<MetricsReport> learned;
};

/// Mean of `values` over bins whose frequency lies in [lo, hi].
inline double band_mean(const std::vector<double>& freqs,
                        const std::vector<double>& values, double lo,
                        double hi) {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t f = 0; f < freqs.size(); ++f) {
    if (freqs[f] >= lo && freqs[f] <= hi) {
      acc += values[f];
      ++n;
    }
  }
  return n ? acc / static_cast<double>(n) : 0.0;
}

inline nlohmann::json report_summary(const MetricsReport& r) {
  return {{"composite_loss", r.composite},
          {"mae_below_1k", band_mean(r.freq_hz, r.mae, 0.0, 1000.0)},
          {"coherence_mean", band_mean(r.freq_hz, r.coherence, 0.0, 1e9)},
          {"s_mean", band_mean(r.freq_hz, r.s_mean, 0.0, 1e9)},
          {"excluded_cells", r.excluded_cells},
          {"coherence_guarded", r.coherence_guarded}};
}

inline EvaluateSummary cmd_evaluate(
    const RunConfig& config, const fs::path& dataset, const std::string& split,
    const std::optional<fs::path>& baseline_path,
    const std::optional<fs::path>& learned_dir, const fs::path& out_dir,
    std::ostream& log) {
  config.validate();
  const std::vector<fs::path> scenes = list_scenes(dataset, split);
  if (scenes.empty()) throw Error("no scenes in split '" + split + "'");
  fs::create_directories(out_dir / "baseline");
  if (learned_dir) fs::create_directories(out_dir / "learned");

  EncodingMatrix baseline;
  if (baseline_path) {
    baseline = read_encoding_matrix(baseline_path->string());
  } else {
    const SceneRecord first = scene_from_json(read_json_file(scenes.front() / "scene.json"));
    RunConfig c = config;
    c.order = first.sh.order;
    c.stft.sample_rate = first.sample_rate;
    baseline = design_for_config(c, first.array).design.matrix;
    log << "designed baseline for the dataset array\n";
  }

  std::vector<MetricsReport> base_reports(scenes.size());
  std::vector<MetricsReport> learned_reports(learned_dir ? scenes.size() : 0);
  detail::parallel_for(scenes.size(), config.jobs, [&](std::size_t i) {
    const fs::path& dir = scenes[i];
    const SceneRecord record = scene_from_json(read_json_file(dir / "scene.json"));
    const WavData mics = read_wav((dir / "mics.wav").string());
    const WavData ref = read_wav((dir / "ref_foa.wav").string());
    STFTConfig stft_config = config.stft;
    stft_config.sample_rate = mics.sample_rate;
    const STFTTensor x = stft(mics.channels, stft_config);
    const STFTTensor y = stft(ref.channels, stft_config);

    base_reports[i] =
        evaluate_metrics(y, apply_static(baseline, x), config.loss_weights);
    emit_report(base_reports[i],
                (out_dir / "baseline" / (record.scene_id + ".csv")).string());

    if (learned_dir) {
      const fs::path scene_out = *learned_dir / record.scene_id;
      STFTTensor est;
      if (fs::exists(scene_out / "matrix.ambtfe")) {
        est = apply_tf(
            read_tf_encoding_matrix((scene_out / "matrix.ambtfe").string()), x);
      } else if (fs::exists(scene_out / "foa.wav")) {
        est = stft(read_wav((scene_out / "foa.wav").string()).channels,
                   stft_config);
      } else {
        throw Error("no learned estimate for " + record.scene_id + " in " +
                    learned_dir->string());
      }
      learned_reports[i] = evaluate_metrics(y, est, config.loss_weights);
      emit_report(learned_reports[i],
                  (out_dir / "learned" / (record.scene_id + ".csv")).string());
    }
  });

  EvaluateSummary summary;
  summary.scenes = scenes.size();
  summary.baseline = average_reports(base_reports);
  emit_report(summary.baseline, (out_dir / "baseline_aggregate.csv").string());
  nlohmann::json json_summary{{"scenes", scenes.size()},
                              {"split", split},
                              {"baseline", report_summary(summary.baseline)}};
  if (learned_dir) {
    summary.learned = average_reports(learned_reports);
    emit_report(*summary.learned, (out_dir / "learned_aggregate.csv").string());
    json_summary["learned"] = report_summary(*summary.learned);

    std::ofstream os(out_dir / "comparison.csv");
    os << "freq_hz,baseline_mae,learned_mae,baseline_energy_err,"
          "learned_energy_err,baseline_coherence,learned_coherence,"
          "baseline_s_mean,learned_s_mean\n";
    const MetricsReport& b = summary.baseline;
    const MetricsReport& l = *summary.learned;
    char buf[32];
    for (std::size_t f = 0; f < b.bins(); ++f) {
      bool first = true;
      for (double v : {b.freq_hz[f], b.mae[f], l.mae[f], b.energy_err[f],
                       l.energy_err[f], b.coherence[f], l.coherence[f],
                       b.s_mean[f], l.s_mean[f]}) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        os << (first ? "" : ",") << buf;
        first = false;
      }
      os << '\n';
    }
  }
  write_json_file(out_dir / "summary.json", json_summary);
  log << "evaluated " << scenes.size() << " scenes\n";
  return summary;
}

}  // namespace foaenc
