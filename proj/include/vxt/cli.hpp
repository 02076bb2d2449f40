#pragma once

// Command-line front door: data generation, training, explanation, analysis,
// sweeps, and evaluation as reproducible pipelines over the persist formats.
// Exit codes: 0 success, 1 usage error, 2 data/model error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vxt/analysis.hpp"
#include "vxt/network.hpp"
#include "vxt/persist.hpp"
#include "vxt/relevance.hpp"
#include "vxt/sampler.hpp"
#include "vxt/synthlab.hpp"

namespace vxt::cli {

class usage_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline Method parse_method(const std::string& text) {
  if (text == "dtd") return Method::DTD;
  if (text == "sensitivity") return Method::Sensitivity;
  throw usage_error("unknown method '" + text + "' (want dtd or sensitivity)");
}

inline Rational parse_step(const std::string& text) {
  try {
    return Rational::parse(text);
  } catch (const std::invalid_argument& e) {
    throw usage_error(e.what());
  }
}

inline std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    out.push_back(text.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<Rational> parse_schedule(const std::string& text) {
  if (text == "default") return step_schedule();
  std::vector<Rational> schedule;
  for (const auto& item : split(text, ',')) schedule.push_back(parse_step(item));
  if (schedule.empty()) throw usage_error("empty step schedule");
  return schedule;
}

inline std::vector<std::size_t> parse_offsets(const std::string& text) {
  if (text == "default") return offset_schedule();
  std::vector<std::size_t> offsets;
  try {
    for (const auto& item : split(text, ',')) {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      offsets.push_back(static_cast<std::size_t>(v));
    }
  } catch (const std::exception&) {
    throw usage_error("cannot parse offset list '" + text + "'");
  }
  if (offsets.empty()) throw usage_error("empty offset list");
  return offsets;
}

inline std::vector<std::size_t> parse_index_list(const std::string& text) {
  std::vector<std::size_t> out;
  if (text.empty()) return out;
  try {
    for (const auto& item : split(text, ',')) {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    }
  } catch (const std::exception&) {
    throw usage_error("cannot parse index list '" + text + "'");
  }
  return out;
}

inline std::optional<std::size_t> parse_class(const std::string& text) {
  if (text == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(text, &used);
    if (used != text.size() || v < 0) throw std::invalid_argument(text);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw usage_error("bad --class '" + text + "' (want auto or a class index)");
  }
}

struct ConfigBlock {
  explicit ConfigBlock(const std::string& command) {
    std::cout << "config: command = " << command << "\n";
  }
  template <typename T>
  ConfigBlock& set(const std::string& key, const T& value) {
    std::cout << "config: " << key << " = " << value << "\n";
    return *this;
  }
};

inline const Video& find_video(const LoadedDataset& data, const std::string& id) {
  for (const Video& v : data.videos)
    if (v.id == id) return v;
  throw std::runtime_error("video id '" + id + "' not found in dataset");
}

inline Explainer make_explainer(Method method, const LoadedDataset& data) {
  Explainer explainer;
  explainer.method = method;
  explainer.config.input_low = {data.videos.empty() ? 0.0 : data.videos.front().pixel_range[0]};
  explainer.config.input_high = {data.videos.empty() ? 1.0 : data.videos.front().pixel_range[1]};
  return explainer;
}

}  // namespace detail

inline int run(int argc, const char* const* argv) {
  CLI::App app{"small 3D-CNN video classifiers with deep Taylor / LRP explanations"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic video dataset");
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  std::size_t gen_count = 0;
  SynthConfig synth;
  std::string gen_cues;
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--out", gen_out, "output container path")->required();
  gen->add_option("--count", gen_count, "number of videos")->required();
  gen->add_option("--classes", synth.class_count, "class count");
  gen->add_option("--frames", synth.frames, "frames per video");
  gen->add_option("--height", synth.height, "frame height");
  gen->add_option("--width", synth.width, "frame width");
  gen->add_option("--noise-std", synth.noise_std, "gaussian noise std");
  gen->add_option("--motion-speed", synth.motion_speed, "base motion speed, px/frame");
  gen->add_option("--cue-frames", gen_cues, "comma list of cue frame indices");
  gen->add_option("--bar-width", synth.bar_width, "bar width in pixels");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the reference net on a dataset");
  std::string train_data, train_out;
  TrainConfig train_config;
  bool train_no_bias = false;
  train_cmd->add_option("--data", train_data, "dataset container")->required();
  train_cmd->add_option("--out", train_out, "output network path")->required();
  train_cmd->add_option("--seed", train_config.seed, "init/shuffle seed");
  train_cmd->add_option("--lr", train_config.learning_rate, "learning rate");
  train_cmd->add_option("--epochs", train_config.epochs, "epochs");
  train_cmd->add_option("--batch", train_config.batch_size, "batch size");
  train_cmd->add_option("--init-scale", train_config.weight_init, "weight init scale");
  train_cmd->add_flag("--no-bias", train_no_bias, "build the bias-free variant");

  // explain
  auto* explain_cmd = app.add_subcommand("explain", "explain one video snippet");
  std::string ex_net, ex_data, ex_video, ex_step = "1", ex_method = "dtd", ex_class = "auto";
  std::string ex_heatmap_dir, ex_out;
  std::size_t ex_offset = 0;
  explain_cmd->add_option("--net", ex_net, "network container")->required();
  explain_cmd->add_option("--data", ex_data, "dataset container")->required();
  explain_cmd->add_option("--video-id", ex_video, "video id")->required();
  explain_cmd->add_option("--offset", ex_offset, "snippet offset");
  explain_cmd->add_option("--step", ex_step, "snippet step, p/q or integer");
  explain_cmd->add_option("--method", ex_method, "dtd or sensitivity");
  explain_cmd->add_option("--class", ex_class, "auto or explicit class index");
  explain_cmd->add_option("--heatmap-dir", ex_heatmap_dir, "directory for P6 heatmaps");
  explain_cmd->add_option("--out", ex_out, "summary CSV path");

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "mean temporal profile and fits");
  std::string an_net, an_data, an_step = "1", an_method = "dtd", an_out;
  std::size_t an_offset = 0, an_jobs = 1;
  analyze_cmd->add_option("--net", an_net, "network container")->required();
  analyze_cmd->add_option("--data", an_data, "dataset container")->required();
  analyze_cmd->add_option("--offset", an_offset, "snippet offset");
  analyze_cmd->add_option("--step", an_step, "snippet step");
  analyze_cmd->add_option("--method", an_method, "dtd or sensitivity");
  analyze_cmd->add_option("--out", an_out, "profile CSV path")->required();
  analyze_cmd->add_option("--jobs", an_jobs, "worker threads");

  // sweep-step
  auto* sstep_cmd = app.add_subcommand("sweep-step", "fits and accuracy per step size");
  std::string ss_net, ss_data, ss_method = "dtd", ss_schedule = "default", ss_out;
  std::size_t ss_offset = 0, ss_topk = 5, ss_jobs = 1;
  sstep_cmd->add_option("--net", ss_net, "network container")->required();
  sstep_cmd->add_option("--data", ss_data, "dataset container")->required();
  sstep_cmd->add_option("--method", ss_method, "dtd or sensitivity");
  sstep_cmd->add_option("--schedule", ss_schedule, "default or comma list of steps");
  sstep_cmd->add_option("--offset", ss_offset, "snippet offset");
  sstep_cmd->add_option("--topk", ss_topk, "top-k for accuracy");
  sstep_cmd->add_option("--jobs", ss_jobs, "worker threads");
  sstep_cmd->add_option("--out", ss_out, "output CSV path")->required();

  // sweep-offset
  auto* soff_cmd = app.add_subcommand("sweep-offset", "fits per snippet offset");
  std::string so_net, so_data, so_method = "dtd", so_offsets = "default", so_step = "1", so_out;
  std::size_t so_jobs = 1;
  soff_cmd->add_option("--net", so_net, "network container")->required();
  soff_cmd->add_option("--data", so_data, "dataset container")->required();
  soff_cmd->add_option("--method", so_method, "dtd or sensitivity");
  soff_cmd->add_option("--offsets", so_offsets, "default or comma list of offsets");
  soff_cmd->add_option("--step", so_step, "snippet step");
  soff_cmd->add_option("--jobs", so_jobs, "worker threads");
  soff_cmd->add_option("--out", so_out, "output CSV path")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "top-k accuracy of a net on a dataset");
  std::string ev_net, ev_data, ev_step = "1", ev_out;
  std::size_t ev_offset = 0, ev_topk = 5;
  eval_cmd->add_option("--net", ev_net, "network container")->required();
  eval_cmd->add_option("--data", ev_data, "dataset container")->required();
  eval_cmd->add_option("--step", ev_step, "snippet step");
  eval_cmd->add_option("--offset", ev_offset, "snippet offset");
  eval_cmd->add_option("--topk", ev_topk, "top-k for accuracy");
  eval_cmd->add_option("--out", ev_out, "accuracy CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) {
      synth.seed = gen_seed;
      synth.cue_frames = detail::parse_index_list(gen_cues);
      detail::ConfigBlock("gen-data")
          .set("seed", synth.seed)
          .set("out", gen_out)
          .set("count", gen_count)
          .set("classes", synth.class_count)
          .set("frames", synth.frames)
          .set("height", synth.height)
          .set("width", synth.width)
          .set("noise_std", synth.noise_std)
          .set("motion_speed", synth.motion_speed)
          .set("cue_frames", gen_cues.empty() ? "none" : gen_cues)
          .set("bar_width", synth.bar_width);
      const auto videos = generate_dataset(synth, gen_count);
      save_dataset(gen_out, videos, synth.class_count);
      std::cout << "wrote " << videos.size() << " videos to " << gen_out << "\n";
    } else if (train_cmd->parsed()) {
      detail::ConfigBlock("train")
          .set("data", train_data)
          .set("out", train_out)
          .set("seed", train_config.seed)
          .set("lr", train_config.learning_rate)
          .set("epochs", train_config.epochs)
          .set("batch", train_config.batch_size)
          .set("init_scale", train_config.weight_init)
          .set("bias", train_no_bias ? "false" : "true");
      const LoadedDataset data = load_dataset(train_data);
      const NetworkSpec base = mini_c3d(data.class_count, !train_no_bias);
      const NetworkSpec model = train(base, data.videos, train_config);
      save_network(train_out, model);
      std::cout << "wrote trained network to " << train_out << "\n";
    } else if (explain_cmd->parsed()) {
      const Method method = detail::parse_method(ex_method);
      const Rational step = detail::parse_step(ex_step);
      const auto target = detail::parse_class(ex_class);
      detail::ConfigBlock("explain")
          .set("net", ex_net)
          .set("data", ex_data)
          .set("video_id", ex_video)
          .set("offset", ex_offset)
          .set("step", step.str())
          .set("method", ex_method)
          .set("class", ex_class)
          .set("heatmap_dir", ex_heatmap_dir.empty() ? "none" : ex_heatmap_dir)
          .set("out", ex_out.empty() ? "none" : ex_out);
      const LoadedDataset data = load_dataset(ex_data);
      const NetworkSpec net = load_network(ex_net);
      const Video& video = detail::find_video(data, ex_video);
      const Tensor snippet = extract_snippet(video, {ex_offset, step, net.input_shape[1]});
      Explainer explainer = detail::make_explainer(method, data);
      explainer.config.target_class = target;
      const AttributionMap map = explain(net, snippet, explainer);
      if (!map.warning.empty()) std::cerr << "warning: " << map.warning << "\n";
      std::cout << "explained_class = " << map.explained_class << "\n";
      std::cout << "explained_value = " << map.explained_value << "\n";
      std::cout << "score_sum = " << map.scores.sum() << "\n";
      if (!ex_out.empty()) write_explain_csv(ex_out, video.id, map);
      if (!ex_heatmap_dir.empty()) {
        const auto paths = render_heatmap(map, ex_heatmap_dir);
        std::cout << "wrote " << paths.size() << " heatmap frames to " << ex_heatmap_dir << "\n";
      }
    } else if (analyze_cmd->parsed()) {
      const Method method = detail::parse_method(an_method);
      const Rational step = detail::parse_step(an_step);
      detail::ConfigBlock("analyze")
          .set("net", an_net)
          .set("data", an_data)
          .set("offset", an_offset)
          .set("step", step.str())
          .set("method", an_method)
          .set("out", an_out)
          .set("jobs", an_jobs);
      const LoadedDataset data = load_dataset(an_data);
      const NetworkSpec net = load_network(an_net);
      const Explainer explainer = detail::make_explainer(method, data);
      const SnippetSpec spec{an_offset, step, net.input_shape[1]};
      const ProfileSummary summary =
          profile_summary(net, data.videos, explainer, spec, net.class_count, an_jobs);
      if (summary.mean_share.empty())
        throw std::runtime_error("analyze: every explanation degenerated");
      write_profile_csv(an_out, summary.mean_share);
      std::cout << "B = " << summary.quad.curvature << "\n";
      std::cout << "C = " << summary.quad.slope << "\n";
      std::cout << "D = " << summary.quad.intercept << "\n";
      std::cout << "L = " << summary.lin.slope << "\n";
      std::cout << "A = " << summary.lin.intercept << "\n";
      std::cout << "excluded = " << summary.excluded << "\n";
      std::cout << "wrote profile to " << an_out << "\n";
    } else if (sstep_cmd->parsed()) {
      const Method method = detail::parse_method(ss_method);
      const auto schedule = detail::parse_schedule(ss_schedule);
      std::string schedule_text;
      for (const auto& s : schedule)
        schedule_text += (schedule_text.empty() ? "" : ",") + s.str();
      detail::ConfigBlock("sweep-step")
          .set("net", ss_net)
          .set("data", ss_data)
          .set("method", ss_method)
          .set("schedule", schedule_text)
          .set("offset", ss_offset)
          .set("topk", ss_topk)
          .set("jobs", ss_jobs)
          .set("out", ss_out);
      const LoadedDataset data = load_dataset(ss_data);
      const NetworkSpec net = load_network(ss_net);
      const Explainer explainer = detail::make_explainer(method, data);
      const auto rows =
          sweep_step(net, data.videos, explainer, schedule, ss_offset, ss_topk, ss_jobs);
      write_step_sweep_csv(ss_out, rows);
      std::cout << "wrote " << rows.size() << " rows to " << ss_out << "\n";
    } else if (soff_cmd->parsed()) {
      const Method method = detail::parse_method(so_method);
      const Rational step = detail::parse_step(so_step);
      const auto offsets = detail::parse_offsets(so_offsets);
      std::string offsets_text;
      for (std::size_t o : offsets)
        offsets_text += (offsets_text.empty() ? "" : ",") + std::to_string(o);
      detail::ConfigBlock("sweep-offset")
          .set("net", so_net)
          .set("data", so_data)
          .set("method", so_method)
          .set("offsets", offsets_text)
          .set("step", step.str())
          .set("jobs", so_jobs)
          .set("out", so_out);
      const LoadedDataset data = load_dataset(so_data);
      const NetworkSpec net = load_network(so_net);
      const Explainer explainer = detail::make_explainer(method, data);
      const auto rows = sweep_offset(net, data.videos, explainer, offsets, step, so_jobs);
      write_offset_sweep_csv(so_out, rows);
      std::cout << "wrote " << rows.size() << " rows to " << so_out << "\n";
    } else if (eval_cmd->parsed()) {
      const Rational step = detail::parse_step(ev_step);
      detail::ConfigBlock("eval")
          .set("net", ev_net)
          .set("data", ev_data)
          .set("step", step.str())
          .set("offset", ev_offset)
          .set("topk", ev_topk)
          .set("out", ev_out.empty() ? "none" : ev_out);
      const LoadedDataset data = load_dataset(ev_data);
      const NetworkSpec net = load_network(ev_net);
      if (ev_topk < 1 || ev_topk > net.class_count)
        throw usage_error("--topk out of range for this network");
      std::size_t hits = 0;
      for (const Video& video : data.videos) {
        const Tensor snippet = extract_snippet(video, {ev_offset, step, net.input_shape[1]});
        const auto [logits, _] = predict(net, snippet);
        if (top_k_hit(logits, video.true_class, ev_topk)) ++hits;
      }
      const double accuracy = static_cast<double>(hits) / static_cast<double>(data.videos.size());
      std::cout << "topk_accuracy = " << accuracy << "\n";
      if (!ev_out.empty()) {
        std::string csv = "topk,step,offset,accuracy\n";
        csv += std::to_string(ev_topk) + "," + step.str() + "," + std::to_string(ev_offset) +
               "," + vxt::detail::format_g17(accuracy) + "\n";
        vxt::detail::atomic_write(ev_out, csv);
      }
    }
  } catch (const usage_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace vxt::cli
