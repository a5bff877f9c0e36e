// Copyright 2026 The nado Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "nado/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "nado/base_model.hpp"
#include "nado/benchmark.hpp"
#include "nado/compose.hpp"
#include "nado/config.hpp"
#include "nado/demos.hpp"
#include "nado/exact.hpp"
#include "nado/layer.hpp"
#include "nado/oracle.hpp"
#include "nado/taskgen.hpp"
#include "nado/train.hpp"

namespace nado {

using nlohmann::json;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

void stderr_log(LogLevel level, const std::string& message) {
  const char* tag = level == LogLevel::kInfo ? "[INFO] " : level == LogLevel::kWarn ? "[WARN] " : "[ERROR] ";
  std::cerr << tag << message << '\n';
}

std::vector<std::string> command_names() {
  return {"train-base", "train-nado", "evaluate", "reproduce"};
}

std::vector<std::string> demo_names() {
  return {"consistency", "truncation", "composition", "exact-recovery"};
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return 2;
    case ErrorCode::kCapacity: return 3;
    case ErrorCode::kInfeasible:
    case ErrorCode::kDeadEnd: return 4;
    default: return 1;
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, path + ": " + e.what());
  }
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

class Run {
 public:
  Run(const RunRequest& req, const LogFn& log) : log_(log) {
    config_ = req.config.is_null() ? json::object() : req.config;
    if (!config_.is_object()) fail(ErrorCode::kConfig, "config must be a JSON object");
    for (const auto& o : req.overrides) apply_override(config_, o);
    command_ = req.command.empty() ? config_.value("command", std::string()) : req.command;
    if (command_.empty()) fail(ErrorCode::kConfig, "no command given");
    if (config_.contains("command") && config_["command"] != command_)
      fail(ErrorCode::kConfig, "config is for command '" + config_["command"].get<std::string>() +
                                   "', not '" + command_ + "'");
    config_["command"] = command_;
    if (command_ == "reproduce") {
      demo_ = req.demo.empty() ? config_.value("demo", std::string()) : req.demo;
      if (demo_.empty()) fail(ErrorCode::kConfig, "reproduce needs a demo name");
      config_["demo"] = demo_;
    }
    if (req.seed) config_["seed"] = *req.seed;
    seed_ = config_.value("seed", std::uint64_t{0});
    config_["seed"] = seed_;
    out_ = req.out_dir.empty() ? config_.value("out", std::string("out")) : req.out_dir;
    config_.erase("out");  // output location is not part of the experiment
    base_dir_ = req.config_dir;
  }

  void execute() {
    std::error_code ec;
    fs::create_directories(out_, ec);
    if (ec) fail(ErrorCode::kIo, "cannot create output directory " + out_ + ": " + ec.message());
    info(command_ + (demo_.empty() ? "" : " " + demo_) + " -> " + out_);
    if (command_ == "train-base") train_base();
    else if (command_ == "train-nado") train_nado_cmd();
    else if (command_ == "evaluate") evaluate();
    else if (command_ == "reproduce") reproduce();
    else fail(ErrorCode::kConfig, "unknown command: " + command_);
    json snap;
    snap["version"] = kVersion;
    snap["command"] = command_;
    snap["config"] = config_;
    snap["fingerprints"] = fingerprints_;
    snap["resolved"] = resolved_;
    write("config.json", snap.dump(2) + "\n");
  }

 private:
  void info(const std::string& m) const { log_(LogLevel::kInfo, m); }
  void warn(const std::string& m) const { log_(LogLevel::kWarn, m); }

  void check(std::initializer_list<const char*> extra) const {
    std::vector<const char*> keys{"command", "seed"};
    keys.insert(keys.end(), extra.begin(), extra.end());
    for (const auto& [key, value] : config_.items()) {
      bool ok = false;
      for (const char* k : keys) ok = ok || key == k;
      if (!ok) fail(ErrorCode::kConfig, command_ + ": unknown key '" + key + "'");
    }
  }

  std::string path_of(const std::string& p) const {
    if (p.empty() || fs::path(p).is_absolute() || base_dir_.empty()) return p;
    return (fs::path(base_dir_) / p).string();
  }

  void write(const std::string& name, const std::string& content) const {
    const auto p = fs::path(out_) / name;
    std::ofstream os(p, std::ios::binary);
    if (!os) fail(ErrorCode::kIo, "cannot write " + p.string());
    os << content;
    if (!os) fail(ErrorCode::kIo, "write failed: " + p.string());
    info("wrote " + p.string());
  }

  // ---- problem resolution ----

  struct Problem {
    std::unique_ptr<BaseModel> model;
    std::optional<Oracle> oracle;
    std::vector<TokenId> x;
  };

  BaseModel model_from_json(const json& m) const {
    if (!m.is_object()) fail(ErrorCode::kConfig, "model must be an object");
    if (m.contains("file")) return BaseModel::from_json(read_json_file(path_of(m["file"])));
    const auto kind = m.value("kind", std::string());
    try {
      if (kind == "uniform" || kind == "unigram") {
        check_keys(m, {"kind", "vocabulary", "space", "weights"}, "model");
        auto vocab = vocab_from_json(m.at("vocabulary"));
        auto space = space_from_json(m.at("space"));
        if (kind == "uniform") return BaseModel::uniform(std::move(vocab), space);
        std::vector<double> w;
        for (const auto& e : m.at("weights")) w.push_back(json_number(e));
        return BaseModel::unigram(std::move(vocab), space, std::move(w));
      }
      if (kind == "ngram" || kind == "neural") return BaseModel::from_json(m);
    } catch (const json::exception& e) {
      fail(ErrorCode::kConfig, std::string("model: ") + e.what());
    }
    fail(ErrorCode::kConfig, "model: unknown kind '" + kind + "'");
  }

  Oracle oracle_from_json(const json& spec, const Vocabulary& vocab) const {
    try {
      return Oracle::from_json(resolve_oracle_symbols(spec, vocab));
    } catch (const json::exception& e) {
      fail(ErrorCode::kConfig, std::string("oracle: ") + e.what());
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kConfig) throw;
      fail(ErrorCode::kConfig, std::string("oracle: ") + e.what());
    }
  }

  Problem problem(bool need_oracle) {
    Problem p;
    if (config_.contains("instance")) {
      auto inst = toy_instance(config_["instance"].get<std::string>());
      p.model = std::make_unique<BaseModel>(std::move(inst.model));
      p.oracle = inst.oracle;
      p.x = inst.x;
    } else {
      if (!config_.contains("model")) fail(ErrorCode::kConfig, command_ + ": needs 'model' or 'instance'");
      p.model = std::make_unique<BaseModel>(model_from_json(config_["model"]));
    }
    if (config_.contains("oracle")) p.oracle = oracle_from_json(config_["oracle"], p.model->vocab());
    if (config_.contains("x")) p.x = parse_tokens(config_["x"], p.model->vocab());
    if (p.oracle && config_.contains("tau")) {
      const double tau = json_number(config_["tau"]);
      if (tau < 1.0) p.oracle = scaled(*p.oracle, tau);
    }
    if (need_oracle && !p.oracle) fail(ErrorCode::kConfig, command_ + ": needs 'oracle' or 'instance'");
    fingerprints_["model"] = p.model->fingerprint();
    if (p.oracle) fingerprints_["oracle"] = p.oracle->fingerprint();
    return p;
  }

  std::size_t eval_budget() const {
    return static_cast<std::size_t>(config_.value("eval_budget", 200000));
  }

  bool enumerable(const StepSource& s) const {
    return count_prefixes(s.vocab().size(), s.space().max_len) <= eval_budget();
  }

  // ---- train-base ----

  void train_base() {
    check({"family", "corpus", "model", "heldout_fraction"});
    Vocabulary vocab;
    SpaceSpec space;
    std::vector<TokenSeq> corpus;
    if (config_.contains("family")) {
      const auto fam = generate_family(FamilySpec::from_json(config_["family"]), seed_);
      resolved_["family"] = fam.spec.to_json();
      vocab = fam.vocab;
      space = fam.space;
      corpus = fam.corpus;
      write("family.json", fam.to_json().dump(2) + "\n");
    } else if (config_.contains("corpus")) {
      const auto& c = config_["corpus"];
      check_keys(c, {"vocabulary", "space", "sequences"}, "corpus");
      try {
        vocab = vocab_from_json(c.at("vocabulary"));
        space = space_from_json(c.at("space"));
        for (const auto& s : c.at("sequences")) corpus.push_back(TokenSeq{parse_tokens(s, vocab), false});
      } catch (const json::exception& e) {
        fail(ErrorCode::kConfig, std::string("corpus: ") + e.what());
      }
    } else {
      fail(ErrorCode::kConfig, "train-base: needs 'family' or 'corpus'");
    }
    const double held = json_number_or(config_, "heldout_fraction", 0.2);
    if (!(held >= 0.0 && held < 1.0)) fail(ErrorCode::kConfig, "heldout_fraction must lie in [0, 1)");
    const auto n_held = static_cast<std::size_t>(std::floor(static_cast<double>(corpus.size()) * held));
    if (corpus.size() - n_held == 0) fail(ErrorCode::kConfig, "train-base: empty training corpus");
    std::vector<TokenSeq> train(corpus.begin(), corpus.end() - static_cast<long>(n_held));
    std::vector<TokenSeq> heldout(corpus.end() - static_cast<long>(n_held), corpus.end());

    const json spec = config_.value("model", json{{"kind", "ngram"}});
    const auto kind = spec.value("kind", std::string("ngram"));
    std::optional<BaseModel> model;
    std::string trace;
    if (kind == "uniform") {
      check_keys(spec, {"kind"}, "model");
      model = BaseModel::uniform(vocab, space);
    } else if (kind == "ngram") {
      check_keys(spec, {"kind", "order", "smoothing"}, "model");
      model = fit_ngram(vocab, space, train, spec.value("order", 2),
                        json_number_or(spec, "smoothing", 1.0));
    } else if (kind == "neural") {
      check_keys(spec, {"kind", "window", "hidden", "init_scale", "steps", "learning_rate", "momentum"},
                 "model");
      model = BaseModel::neural(vocab, space, spec.value("window", 2), spec.value("hidden", 16), seed_,
                                json_number_or(spec, "init_scale", 0.5));
      NeuralTrainConfig nc;
      nc.steps = spec.value("steps", nc.steps);
      nc.learning_rate = json_number_or(spec, "learning_rate", nc.learning_rate);
      nc.momentum = json_number_or(spec, "momentum", nc.momentum);
      const auto losses = train_neural_lm(*model, train, nc);
      trace = "step,loss\n";
      for (std::size_t i = 0; i < losses.size(); ++i) trace += std::to_string(i) + "," + fmt(losses[i]) + "\n";
    } else {
      fail(ErrorCode::kConfig, "model: unknown kind '" + kind + "'");
    }

    write("model.json", model->to_json().dump(2) + "\n");
    if (!trace.empty()) write("loss.csv", trace);
    fingerprints_["model"] = model->fingerprint();

    ojson report;
    report["kind"] = kind;
    report["fingerprint"] = model->fingerprint();
    report["train_sequences"] = train.size();
    report["heldout_sequences"] = heldout.size();
    report["train_perplexity"] = opt_json(perplexity(*model, train));
    report["heldout_perplexity"] = opt_json(perplexity(*model, heldout));
    if (enumerable(*model)) {
      double mass = 0.0;
      for_each_sequence(*model, {}, [&](const std::vector<TokenId>&, double lp) { mass += std::exp(lp); });
      report["total_mass"] = mass;
    } else {
      report["total_mass"] = nullptr;
    }
    write("report.json", report.dump(2) + "\n");
  }

  static std::optional<double> perplexity(const BaseModel& model, const std::vector<TokenSeq>& seqs) {
    double nll = 0.0;
    std::size_t n = 0;
    const auto eos = model.vocab().eos();
    for (const auto& s : seqs) {
      std::vector<TokenId> y = s.ids;
      if (eos && (y.empty() || y.back() != *eos) && static_cast<int>(y.size()) < model.space().max_len)
        y.push_back(*eos);
      nll -= sequence_logprob(model, {}, y);
      n += y.size();
    }
    if (n == 0) return std::nullopt;
    return std::exp(nll / static_cast<double>(n));
  }

  // ---- layers ----

  struct LayerSpec {
    std::vector<HeadKind> heads{HeadKind::kConsistent};
    bool neural = false;
    NeuralScorerSpec scorer;
    ContextMode mode = ContextMode::kTokensOnly;
    double init_scale = 0.0;
  };

  LayerSpec layer_spec() const {
    LayerSpec s;
    const json j = config_.value("layer", json::object());
    check_keys(j, {"heads", "head", "scorer", "neural", "context", "init_scale"}, "layer");
    if (j.contains("heads")) {
      s.heads.clear();
      for (const auto& h : j["heads"]) s.heads.push_back(parse_head(h.get<std::string>()));
      if (s.heads.empty()) fail(ErrorCode::kConfig, "layer: empty head list");
    } else if (j.contains("head")) {
      s.heads = {parse_head(j["head"].get<std::string>())};
    }
    const auto scorer = j.value("scorer", std::string("tabular"));
    if (scorer != "tabular" && scorer != "neural") fail(ErrorCode::kConfig, "layer: scorer must be tabular or neural");
    s.neural = scorer == "neural";
    s.scorer = scorer_from_json(j.value("neural", json()), s.scorer);
    const auto ctx = j.value("context", std::string("tokens"));
    if (ctx == "upstream") s.mode = ContextMode::kTokensUpstream;
    else if (ctx != "tokens") fail(ErrorCode::kConfig, "layer: context must be tokens or upstream");
    s.init_scale = json_number_or(j, "init_scale", 0.0);
    return s;
  }

  NadoLayer make_layer(const LayerSpec& s, HeadKind head, const StepSource& base,
                       std::uint64_t seed) const {
    auto layer = s.neural ? NadoLayer::neural(head, base.vocab(), base.space(), s.scorer, s.mode, seed)
                          : NadoLayer::tabular(head, base.vocab(), base.space());
    if (!s.neural && s.init_scale > 0.0) randomize_params(layer, seed, s.init_scale);
    layer.set_base_fingerprint(base.fingerprint());
    return layer;
  }

  TrainConfig train_config() const {
    TrainConfig d;
    d.seed = seed_;
    return train_config_from_json(config_.value("train", json()), d);
  }

  // ---- train-nado ----

  void train_nado_cmd() {
    check({"instance", "model", "oracle", "x", "tau", "layer", "train", "warmup", "probe", "stack",
           "eval_budget"});
    const bool stack_mode = config_.contains("stack");
    auto p = problem(!stack_mode);
    const auto spec = layer_spec();
    const auto tc = train_config();
    resolved_["train"] = train_config_to_json(tc);
    resolved_["x"] = p.x;
    ojson report;
    report["base_satisfaction"] =
        p.oracle ? opt_json(exact_rate(*p.oracle, *p.model, p.x)) : json(nullptr);

    if (config_.contains("probe")) probe(p, spec, report);

    if (stack_mode) {
      train_stack_cmd(p, spec, tc, report);
      write("report.json", report.dump(2) + "\n");
      return;
    }

    std::string jsonl, csv = "head,step,loss,kl_to_exact,satisfaction_rate,residual_max\n";
    const std::vector<TrainTask> tasks{TrainTask{p.x, *p.oracle}};
    for (HeadKind head : spec.heads) {
      const std::string hn = head_name(head);
      auto layer = make_layer(spec, head, *p.model, seed_);
      ojson hr;
      if (config_.contains("warmup")) hr["warmup"] = warmup(layer, p);
      info("training " + hn + " head for " + std::to_string(tc.steps) + " steps");
      const auto rows = train_nado(layer, *p.model, tasks, tc);
      for (const auto& r : rows) {
        ojson line;
        line["head"] = hn;
        const auto parsed = ojson::parse(metrics_json_line(r));
        for (auto& [k, v] : parsed.items()) line[k] = v;
        jsonl += line.dump() + "\n";
        csv += hn + "," + std::to_string(r.step) + "," + fmt(r.loss) + "," + fmt_opt(r.kl_to_exact) + "," +
               fmt(r.satisfaction_rate) + "," + fmt_opt(r.residual_max) + "\n";
      }
      if (!rows.empty()) {
        hr["steps"] = rows.back().step;
        hr["loss"] = rows.back().loss;
        hr["kl_to_exact"] = opt_json(rows.back().kl_to_exact);
        hr["satisfaction_rate"] = rows.back().satisfaction_rate;
        hr["residual_max"] = opt_json(rows.back().residual_max);
      }
      hr["layer_fingerprint"] = layer.fingerprint();
      fingerprints_["layer_" + hn] = layer.fingerprint();
      report["heads"][hn] = hr;
      write("layer_" + hn + ".json", layer.to_json().dump(2) + "\n");
    }
    write("metrics.jsonl", jsonl);
    write("metrics.csv", csv);
    write("report.json", report.dump(2) + "\n");
  }

  std::optional<double> exact_rate(const Oracle& o, const StepSource& s, Tokens x) const {
    if (!enumerable(s)) return std::nullopt;
    return satisfaction_rate(o, s, x, 0, 0, eval_budget()).rate;
  }

  ojson warmup(NadoLayer& layer, const Problem& p) const {
    const json& w = config_["warmup"];
    check_keys(w, {"steps", "learning_rate", "momentum", "samples"}, "warmup");
    WarmupConfig wc;
    wc.steps = w.value("steps", wc.steps);
    wc.learning_rate = json_number_or(w, "learning_rate", wc.learning_rate);
    wc.momentum = json_number_or(w, "momentum", wc.momentum);
    const auto samples = w.value("samples", std::size_t{200});
    Rng rng(seed_ + 1);
    std::vector<std::pair<std::vector<TokenId>, std::vector<TokenId>>> positives;
    const auto eos = p.model->vocab().eos();
    for (std::size_t i = 0; i < samples; ++i) {
      auto y = sample_sequence(*p.model, p.x, rng);
      if (p.oracle->evaluate(p.x, y, eos) >= 0.5) positives.emplace_back(p.x, y.ids);
    }
    ojson out;
    out["positives"] = positives.size();
    if (positives.empty()) {
      warn("warmup: no satisfying samples, skipped");
      return out;
    }
    const auto roots = layer.root_param_indices();
    std::vector<double> before;
    for (auto i : roots) before.push_back(layer.params()[i]);
    const auto nll = warmup_likelihood(layer, *p.model, positives, wc);
    bool unchanged = true;
    for (std::size_t k = 0; k < roots.size(); ++k) unchanged = unchanged && layer.params()[roots[k]] == before[k];
    out["initial_nll"] = nll.empty() ? json(nullptr) : json(nll.front());
    out["final_nll"] = nll.empty() ? json(nullptr) : json(nll.back());
    out["root_params_unchanged"] = unchanged;
    return out;
  }

  void probe(const Problem& p, const LayerSpec& spec, ojson& report) {
    const json& j = config_["probe"];
    check_keys(j, {"strategies", "trials", "budget", "seeds", "init_scale"}, "probe");
    std::vector<SampleStrategy> strategies{SampleStrategy::kAncestral, SampleStrategy::kBasisSampling};
    if (j.contains("strategies")) {
      strategies.clear();
      for (const auto& s : j["strategies"]) strategies.push_back(parse_strategy(s.get<std::string>()));
    }
    const auto trials = j.value("trials", std::size_t{100});
    const auto budget = j.value("budget", std::size_t{32});
    const auto seeds = j.value("seeds", std::vector<std::uint64_t>{1, 2, 3, 4, 5});
    const double scale = json_number_or(j, "init_scale", 0.1);
    LossConfig loss = train_config().loss;
    const TrainTask task{p.x, *p.oracle};
    std::string csv = "seed,strategy,satisfaction,mean_param_variance,root_dr_variance\n";
    std::vector<double> means(strategies.size(), 0.0);
    for (auto seed : seeds) {
      auto layer = make_layer(spec, spec.heads.front(), *p.model, seed);
      if (scale > 0.0) randomize_params(layer, seed, scale);
      for (std::size_t s = 0; s < strategies.size(); ++s) {
        const auto r = gradient_variance_probe(layer, *p.model, task, strategies[s], trials, budget, seed, loss);
        means[s] += r.mean_param_variance / static_cast<double>(seeds.size());
        csv += std::to_string(seed) + "," + r.strategy + "," + fmt(r.satisfaction_rate) + "," +
               fmt(r.mean_param_variance) + "," + fmt(r.root_dr_variance) + "\n";
      }
    }
    ojson pr;
    for (std::size_t s = 0; s < strategies.size(); ++s) pr["mean_variance"][strategy_name(strategies[s])] = means[s];
    if (strategies.size() >= 2 && means[0] > 0.0) pr["ratio_second_to_first"] = means[1] / means[0];
    report["probe"] = pr;
    write("variance.csv", csv);
  }

  void train_stack_cmd(const Problem& p, const LayerSpec& spec, const TrainConfig& tc, ojson& report) {
    const json& j = config_["stack"];
    check_keys(j, {"mode", "oracles"}, "stack");
    CascadeStack stack;
    stack.mode = parse_compose_mode(j.value("mode", std::string("independent")));
    std::vector<std::vector<TrainTask>> tasks;
    for (const auto& o : j.at("oracles")) {
      stack.oracles.push_back(oracle_from_json(o, p.model->vocab()));
      tasks.push_back({TrainTask{p.x, stack.oracles.back()}});
    }
    if (stack.oracles.empty()) fail(ErrorCode::kConfig, "stack: no oracles");
    for (std::size_t k = 0; k < stack.oracles.size(); ++k)
      stack.layers.push_back(make_layer(spec, spec.heads.front(), *p.model, seed_ + 31 * (k + 1)));
    info("training " + std::to_string(stack.layers.size()) + "-layer " + compose_mode_name(stack.mode) + " stack");
    const auto metrics = train_stack(stack, *p.model, tasks, tc);
    std::string jsonl, csv = "layer,delta_max,delta_mean,eval_prefixes\n";
    for (const auto& m : metrics) {
      csv += std::to_string(m.layer) + "," + fmt(m.delta_max) + "," + fmt(m.delta_mean) + "," +
             std::to_string(m.eval_prefixes) + "\n";
      for (const auto& r : m.trace) {
        ojson line;
        line["layer"] = m.layer;
        const auto parsed = ojson::parse(metrics_json_line(r));
        for (auto& [k, v] : parsed.items()) line[k] = v;
        jsonl += line.dump() + "\n";
      }
    }
    std::vector<Oracle> all = stack.oracles;
    const Oracle conj = conjoin(all);
    StackSource policy(stack, *p.model);
    ojson sr;
    sr["mode"] = compose_mode_name(stack.mode);
    sr["satisfaction_rate"] = opt_json(exact_rate(conj, policy, p.x));
    if (enumerable(*p.model)) sr["kl_to_exact"] = kl_or_null(*p.model, conj, policy, p.x);
    report["stack"] = sr;
    write("stack.json", stack.to_json().dump(2) + "\n");
    write("stack_layers.csv", csv);
    write("metrics.jsonl", jsonl);
    fingerprints_["stack_oracle"] = conj.fingerprint();
  }

  json kl_or_null(const StepSource& model, const Oracle& o, const StepSource& policy, Tokens x) const {
    try {
      return joint_kl(closed_form_joint(model, o, x, eval_budget()), policy, x, eval_budget());
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kInfeasible) throw;
      warn(std::string("KL to exact unavailable: ") + e.what());
      return nullptr;
    }
  }

  // ---- evaluate ----

  void evaluate() {
    check({"instance", "model", "oracle", "x", "tau", "policy", "decode", "bound_check", "eval_budget"});
    auto p = problem(false);
    const json pol = config_.value("policy", json{{"kind", "base"}});
    check_keys(pol, {"kind", "file", "head", "allow_mismatch"}, "policy");
    const auto kind = pol.value("kind", std::string("base"));
    const bool allow = pol.value("allow_mismatch", false);

    std::optional<NadoLayer> layer;
    std::optional<CascadeStack> stack;
    std::optional<ExactRatioTable> table;
    std::unique_ptr<StepSource> owned;
    const StepSource* policy = p.model.get();
    if (kind == "base") {
    } else if (kind == "identity") {
      layer = NadoLayer::tabular(HeadKind::kConsistent, p.model->vocab(), p.model->space());
    } else if (kind == "exact" || kind == "exact_layer") {
      if (!p.oracle) fail(ErrorCode::kConfig, "policy " + kind + " needs an oracle");
      table = compute_exact_ratios(*p.model, *p.oracle, p.x, eval_budget());
      if (table->at({}) <= 0.0) fail(ErrorCode::kInfeasible, "constraint has zero probability under the model");
      if (kind == "exact") {
        owned = std::make_unique<ExactGuidedSource>(*table, *p.model);
        policy = owned.get();
      } else {
        layer = NadoLayer::from_exact_table(parse_head(pol.value("head", std::string("consistent"))), *table);
      }
    } else if (kind == "layer") {
      layer = NadoLayer::from_json(read_json_file(path_of(pol.at("file"))));
    } else if (kind == "stack") {
      stack = CascadeStack::from_json(read_json_file(path_of(pol.at("file"))));
      if (!p.oracle) p.oracle = conjoin(stack->oracles);
    } else {
      fail(ErrorCode::kConfig, "policy: unknown kind '" + kind + "'");
    }
    if (layer) {
      owned = std::make_unique<LayerSource>(*layer, *p.model, allow);
      policy = owned.get();
      fingerprints_["layer"] = layer->fingerprint();
    }
    if (stack) {
      owned = std::make_unique<StackSource>(*stack, *p.model);
      policy = owned.get();
    }
    if (!p.oracle) fail(ErrorCode::kConfig, "evaluate: needs an oracle");
    fingerprints_["oracle"] = p.oracle->fingerprint();

    const json dec = config_.value("decode", json::object());
    check_keys(dec, {"samples", "strategy", "beam_width"}, "decode");
    const auto samples = dec.value("samples", std::size_t{200});
    DecodeOptions opt;
    const auto strat = dec.value("strategy", std::string("sample"));
    if (strat == "sample") opt.strategy = DecodeStrategy::kSample;
    else if (strat == "greedy") opt.strategy = DecodeStrategy::kGreedy;
    else if (strat == "beam") opt.strategy = DecodeStrategy::kBeam;
    else fail(ErrorCode::kConfig, "decode: unknown strategy '" + strat + "'");
    opt.beam_width = dec.value("beam_width", opt.beam_width);

    const bool exact_ok = enumerable(*p.model);
    ojson m;
    m["policy"] = kind;
    m["base_satisfaction"] = opt_json(exact_rate(*p.oracle, *p.model, p.x));
    m["satisfaction_rate"] = opt_json(exact_rate(*p.oracle, *policy, p.x));
    Rng rng(seed_);
    std::vector<TokenSeq> decodes;
    for (std::size_t i = 0; i < samples; ++i) decodes.push_back(decode(*policy, p.x, opt, &rng));
    ConstraintSet cs{{*p.oracle}, Independence::kStatisticallyIndependent, "eval"};
    m["coverage"] = samples ? json(coverage_metric(decodes, cs, p.x, p.model->vocab().eos())) : json(nullptr);
    m["decodes"] = samples;
    m["kl_to_exact"] = exact_ok ? kl_or_null(*p.model, *p.oracle, *policy, p.x) : json(nullptr);
    m["residual_max"] = (layer && exact_ok)
                            ? json(max_consistency_residual(*layer, *p.model, p.x, eval_budget()).abs_gap)
                            : json(nullptr);
    if (!exact_ok) warn("sequence space exceeds eval_budget; exact metrics skipped");

    if (stack && exact_ok) {
      std::string csv = "layer,delta_max,delta_mean,eval_prefixes\n";
      ojson deltas = ojson::array();
      for (std::size_t k = 0; k < stack->layers.size(); ++k) {
        std::optional<StackSource> upstream;
        const StepSource* b = p.model.get();
        if (stack->mode == ComposeMode::kCascaded) {
          upstream.emplace(*stack, *p.model, k);
          b = &*upstream;
        }
        const auto t = compute_exact_ratios(*b, stack->oracles[k], p.x, eval_budget());
        std::size_t count = 0;
        const auto [mx, mean] = log_ratio_error(stack->layers[k], *b, t, p.x, &count);
        csv += std::to_string(k) + "," + fmt(mx) + "," + fmt(mean) + "," + std::to_string(count) + "\n";
        deltas.push_back(mx);
      }
      m["layer_delta_max"] = deltas;
      write("layers.csv", csv);
    }
    if (config_.contains("bound_check")) bound(p, m);

    std::string csv = "metric,value\n";
    for (auto& [k, v] : m.items())
      if (v.is_number()) csv += k + "," + fmt(v.get<double>()) + "\n";
    write("metrics.json", m.dump(2) + "\n");
    write("metrics.csv", csv);
  }

  void bound(const Problem& p, ojson& m) {
    const json& j = config_["bound_check"];
    check_keys(j, {"oracles", "combos", "deltas", "modes"}, "bound_check");
    std::vector<ExactRatioTable> tables;
    for (const auto& o : j.at("oracles"))
      tables.push_back(compute_exact_ratios(*p.model, oracle_from_json(o, p.model->vocab()), p.x, eval_budget()));
    std::vector<std::vector<std::size_t>> combos;
    if (j.contains("combos")) {
      combos = j["combos"].get<std::vector<std::vector<std::size_t>>>();
    } else {
      std::vector<std::size_t> all;
      for (std::size_t i = 0; i < tables.size(); ++i) all.push_back(i);
      combos.push_back(all);
    }
    for (const auto& c : combos)
      for (auto i : c)
        if (i >= tables.size()) fail(ErrorCode::kConfig, "bound_check: combo index out of range");
    const auto deltas = j.value("deltas", std::vector<double>{0.05, 0.1});
    const auto modes = j.value("modes", std::vector<std::string>{"uniform", "aligned"});
    std::vector<BoundRow> rows;
    for (double d : deltas)
      for (const auto& mode : modes) {
        PerturbationMode pm;
        if (mode == "uniform") pm = PerturbationMode::kUniform;
        else if (mode == "aligned") pm = PerturbationMode::kAligned;
        else fail(ErrorCode::kConfig, "bound_check: unknown mode '" + mode + "'");
        auto r = bound_check(tables, *p.model, combos, d, pm, seed_);
        rows.insert(rows.end(), r.begin(), r.end());
      }
    bool ok = true;
    for (const auto& r : rows) ok = ok && r.within_bound;
    m["bound_all_within"] = ok;
    write("bound.csv", bound_csv(rows));
  }

  // ---- reproduce ----

  void reproduce() {
    check({"demo", "consistency", "truncation", "composition", "exact_recovery"});
    if (demo_ == "consistency") repro_consistency();
    else if (demo_ == "truncation") repro_truncation();
    else if (demo_ == "composition") repro_composition();
    else if (demo_ == "exact-recovery") repro_recovery();
    else fail(ErrorCode::kConfig, "unknown demo '" + demo_ + "'; expected consistency, truncation, "
                                  "composition or exact-recovery");
  }

  json section(const char* name, std::initializer_list<const char*> keys) const {
    json j = config_.value(name, json::object());
    check_keys(j, keys, name);
    return j;
  }

  void repro_consistency() {
    const json j = section("consistency", {"instances", "taus", "residual_instance", "steps", "every", "init_scale"});
    const auto instances = j.value("instances", std::vector<std::string>{"abc3", "eos3"});
    const auto taus = j.value("taus", std::vector<double>{0.1, 0.5, 0.9});
    std::string inv = "instance,tau,prefixes,max_step_diff,max_table_diff\n";
    ojson report;
    double worst_step = 0.0, worst_table = 0.0;
    for (const auto& name : instances) {
      const auto rows = invariance_check(toy_instance(name), taus);
      for (const auto& r : rows) {
        inv += name + "," + fmt(r.tau) + "," + std::to_string(r.prefixes) + "," + fmt(r.max_step_diff) + "," +
               fmt(r.max_table_diff) + "\n";
        worst_step = std::max(worst_step, r.max_step_diff);
        worst_table = std::max(worst_table, r.max_table_diff);
      }
    }
    report["invariance_max_step_diff"] = worst_step;
    report["invariance_max_table_diff"] = worst_table;
    const auto inst = toy_instance(j.value("residual_instance", std::string("abc3")));
    const auto curve = residual_curves(inst, j.value("steps", 200), j.value("every", 50), seed_,
                                       json_number_or(j, "init_scale", 1.0));
    double worst_consistent = 0.0, vanilla_init = 0.0;
    for (const auto& pt : curve) {
      if (pt.head == "consistent") worst_consistent = std::max(worst_consistent, pt.residual);
      if (pt.head == "vanilla" && pt.step == 0) vanilla_init = pt.residual;
    }
    report["consistent_residual_max"] = worst_consistent;
    report["vanilla_residual_at_init"] = vanilla_init;
    write("invariance.csv", inv);
    write("residual.csv", residual_csv(curve));
    write("report.json", report.dump(2) + "\n");
  }

  void repro_truncation() {
    const json j = section("truncation", {"instances", "ks", "variance_instance", "seeds", "trials", "budget"});
    const auto rows = truncation_table(j.value("instances", std::vector<std::string>{"t1", "t2", "conj2"}),
                                       j.value("ks", std::vector<std::size_t>{2, 3}));
    const auto var = variance_table(toy_instance(j.value("variance_instance", std::string("rare"))),
                                    j.value("seeds", std::vector<std::uint64_t>{1, 2, 3, 4, 5}),
                                    j.value("trials", std::size_t{100}), j.value("budget", std::size_t{32}));
    bool all = true;
    for (const auto& r : rows) all = all && r.topk_optimal;
    ojson report;
    report["topk_optimal_everywhere"] = all;
    report["variance_ratio"] = var.ratio;
    report["satisfaction"] = var.rows.empty() ? json(nullptr) : json(var.rows.front().satisfaction);
    write("truncation.csv", truncation_csv(rows));
    write("variance.csv", variance_csv(var));
    write("report.json", report.dump(2) + "\n");
  }

  void repro_composition() {
    const json j = section("composition", {"deltas", "benchmark", "skip_benchmark"});
    const auto bounds = bound_table(j.value("deltas", std::vector<double>{0.05, 0.1}), seed_);
    write("bound.csv", bound_csv(bounds));
    ojson report;
    bool ok = true;
    for (const auto& r : bounds) ok = ok && r.within_bound;
    report["bound_all_within"] = ok;
    if (!j.value("skip_benchmark", false)) {
      auto bc = BenchmarkConfig::from_json(j.value("benchmark", json()));
      bc.seed = seed_;
      resolved_["benchmark"] = bc.to_json();
      info("running composition benchmark");
      const auto res = run_composition_benchmark(bc);
      write("coverage.csv", res.coverage_csv());
      write("cascade.csv", res.cascade_csv());
      write("benchmark.json", res.summary_json().dump(2) + "\n");
      report["benchmark"] = res.summary_json();
    }
    write("report.json", report.dump(2) + "\n");
  }

  void repro_recovery() {
    const json j = section("exact_recovery", {"instances", "heads", "steps"});
    auto specs = default_recovery_specs();
    std::vector<RecoveryRow> rows;
    const auto names = j.value("instances", std::vector<std::string>{});
    const auto heads = j.value("heads", std::vector<std::string>{});
    auto listed = [](const std::vector<std::string>& v, const std::string& s) {
      return v.empty() || std::find(v.begin(), v.end(), s) != v.end();
    };
    for (auto& s : specs) {
      if (!listed(names, s.instance) || !listed(heads, head_name(s.head))) continue;
      if (j.contains("steps")) s.train.steps = j["steps"].get<int>();
      s.train.seed = seed_;
      info("recovery: " + s.instance + " " + head_name(s.head) + " " + std::to_string(s.train.steps) + " steps");
      rows.push_back(run_recovery(s));
    }
    double worst = 0.0;
    for (const auto& r : rows) worst = std::max(worst, r.kl);
    ojson report;
    report["instances"] = rows.size();
    report["max_kl"] = worst;
    write("recovery.csv", recovery_csv(rows));
    write("report.json", report.dump(2) + "\n");
  }

  const LogFn& log_;
  json config_;
  std::string command_;
  std::string demo_;
  std::uint64_t seed_ = 0;
  std::string out_;
  std::string base_dir_;
  json fingerprints_ = json::object();
  json resolved_ = json::object();  // settings after defaults are applied
};

}  // namespace

void run_request(const RunRequest& request, const LogFn& log) {
  Run run(request, log);
  run.execute();
}

int run_request_status(const RunRequest& request, const LogFn& log, std::string* error) {
  try {
    run_request(request, log);
    return 0;
  } catch (const Error& e) {
    log(LogLevel::kError, std::string(error_code_name(e.code())) + ": " + e.what());
    if (error) *error = e.what();
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    log(LogLevel::kError, e.what());
    if (error) *error = e.what();
    return 1;
  }
}

}  // namespace nado
