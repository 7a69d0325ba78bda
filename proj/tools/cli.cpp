#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "sflab/analysis.hpp"
#include "sflab/attacks.hpp"
#include "sflab/checkpoint.hpp"
#include "sflab/config.hpp"
#include "sflab/data.hpp"
#include "sflab/report.hpp"

namespace sflab {

namespace fs = std::filesystem;

namespace {

// Flags shared by every subcommand. Unset optionals leave the config value.
struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<float> epsilons;
  std::optional<float> eta;
  std::optional<int> steps;
  std::optional<float> alpha;
  std::optional<float> beta;
  std::string out;
  std::string format;
  std::vector<std::string> variants;
  std::optional<int> epochs;
  std::optional<std::int64_t> count;
  std::optional<std::int64_t> limit;
  std::string checkpoint;
};

void add_common(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "run configuration file")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "seed for data, initialization and shuffling");
  app->add_option("--epsilon,--epsilons", o.epsilons, "attack budget(s)")->delimiter(',');
  app->add_option("--eta", o.eta, "attack step size");
  app->add_option("--steps", o.steps, "attack steps");
  app->add_option("--alpha", o.alpha, "Interp mixing coefficient");
  app->add_option("--beta", o.beta, "Subst mixing coefficient");
  app->add_option("--out", o.out, "report path");
  app->add_option("--format", o.format, "report format")->check(CLI::IsMember({"csv", "json"}));
  app->add_option("--variant", o.variants, "model variant(s)")->delimiter(',');
  app->add_option("--epochs", o.epochs, "training epochs");
  app->add_option("--count", o.count, "dataset item count");
  app->add_option("--limit", o.limit, "attack at most this many test images");
  app->add_option("--checkpoint", o.checkpoint, "load this checkpoint instead of training");
}

RunConfig resolve_config(const Overrides& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) c.apply_seed(*o.seed);
  if (!o.epsilons.empty()) c.epsilons = o.epsilons;
  if (o.eta) c.eta = o.eta;
  if (o.steps) c.steps = *o.steps;
  if (o.alpha) c.mix = *o.alpha;
  if (o.beta) c.mix = *o.beta;
  if (!o.out.empty()) c.out = o.out;
  if (!o.variants.empty()) {
    c.variants.clear();
    for (const auto& v : o.variants) c.variants.push_back(parse_variant(v));
  }
  if (o.alpha && o.variants.empty()) c.variants = {Variant::kInterp};
  if (o.beta && o.variants.empty()) c.variants = {Variant::kSubst};
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.count) c.data.count = *o.count;
  if (o.limit) c.attack_limit = *o.limit;
  if (!o.checkpoint.empty()) c.checkpoint = o.checkpoint;
  c.validate();
  return c;
}

ReportFormat report_format(const Overrides& o, const RunConfig& c) {
  if (!o.format.empty()) return parse_format(o.format);
  return c.out.extension() == ".json" ? ReportFormat::kJson : ReportFormat::kCsv;
}

// Shared experiment state for one invocation.
class Session {
 public:
  Session(RunConfig config, std::ostream& log) : config_(std::move(config)), log_(log) {}

  const RunConfig& config() const { return config_; }

  const DatasetSplits& data() {
    if (!data_) {
      data_ = load_dataset(config_.data);
      log_ << "data: " << data_->train.size() << " train / " << data_->val.size() << " val / "
           << data_->test.size() << " test\n";
    }
    return *data_;
  }

  Dataset attack_set() {
    const auto& test = data().test;
    if (test.empty()) throw Error("the test split is empty; raise data.count or the test fraction");
    const auto n = config_.attack_limit > 0 ? std::min(config_.attack_limit, test.size()) : test.size();
    return test.slice(0, n);
  }

  ModelInstance model(const ModelSpec& spec) {
    if (config_.checkpoint) {
      auto loaded = load_checkpoint(*config_.checkpoint);
      if (loaded.model.spec().variant == spec.variant) {
        log_ << "loaded " << loaded.model.spec().label() << " from " << config_.checkpoint->string() << '\n';
        return std::move(loaded.model);
      }
    }
    ModelInstance m = build_model(spec);
    const auto history = train(m, data().train, config_.train);
    log_ << "trained " << spec.label() << ": loss " << format_number(history.back().mean_loss) << ", train acc "
         << format_number(history.back().train_accuracy) << '\n';
    return m;
  }

  ModelInstance model(Variant v) { return model(config_.model_spec(v)); }

 private:
  RunConfig config_;
  std::ostream& log_;
  std::optional<DatasetSplits> data_;
};

void emit(const Report& report, const RunConfig& c, ReportFormat format, std::ostream& out) {
  write_report(report, c.out, format);
  out << render_report(report, format);
}

std::vector<float> transfer_epsilons(const Overrides& o, const RunConfig& c, bool config_has_eps) {
  if (!o.epsilons.empty() || config_has_eps) return c.epsilons;
  return {0.1f, 0.2f, 0.3f};
}

// ---------------------------------------------------------------------------

void run_train(Session& s, const std::string& save_dir, ReportFormat format, std::ostream& out) {
  Report report({"model", "epochs", "trainable_params", "final_loss", "train_acc", "val_acc", "test_acc"});
  for (Variant v : s.config().variants) {
    const ModelSpec spec = s.config().model_spec(v);
    ModelInstance m = build_model(spec);
    const auto history = train(m, s.data().train, s.config().train);
    const auto& last = history.back();
    const auto acc = [&](const Dataset& d) { return d.empty() ? 0.0 : static_cast<double>(evaluate(m, d)); };
    report.add_row({spec.label(), std::int64_t{s.config().train.epochs}, m.trainable_parameter_count(),
                    last.mean_loss, last.train_accuracy, acc(s.data().val), acc(s.data().test)});
    if (!save_dir.empty()) {
      const auto dir = fs::path(save_dir) / spec.label();
      save_checkpoint(m, dir,
                      {{"epochs", std::to_string(s.config().train.epochs)},
                       {"experiment", s.config().experiment},
                       {"final_loss", format_number(last.mean_loss)},
                       {"train_seed", std::to_string(s.config().train.seed)}});
    }
  }
  emit(report, s.config(), format, out);
}

void run_attack(Session& s, ReportFormat format, std::ostream& out) {
  Report report({"model", "epsilon", "clean_acc", "attacked_acc"});
  const Dataset set = s.attack_set();
  for (Variant v : s.config().variants) {
    const ModelInstance m = s.model(v);
    for (float eps : s.config().epsilons) {
      const auto batch = run_attack(m, set.images, set.labels, s.config().attack_config(eps));
      report.add_row({m.spec().label(), static_cast<double>(eps), static_cast<double>(batch.clean_accuracy()),
                      static_cast<double>(batch.attacked_accuracy())});
    }
  }
  emit(report, s.config(), format, out);
}

void run_transfer(Session& s, const std::vector<float>& epsilons, ReportFormat format, std::ostream& out) {
  Report report({"surrogate", "target", "epsilon", "clean_acc", "attacked_acc"});
  const Dataset set = s.attack_set();
  const ModelInstance surrogate = s.model(s.config().surrogate);
  std::vector<ModelInstance> targets;
  for (Variant v : s.config().variants) targets.push_back(s.model(v));
  std::vector<NamedModel> named;
  for (const auto& t : targets) named.push_back({t.spec().label(), &t});
  for (float eps : epsilons) {
    AttackConfig a = s.config().attack_config(eps);
    a.domain = AttackDomain::kPixel;
    for (const auto& row : transfer_attack(surrogate, named, set.images, set.labels, a)) {
      report.add_row({surrogate.spec().label(), row.target, static_cast<double>(row.epsilon),
                      static_cast<double>(row.clean_accuracy), static_cast<double>(row.attacked_accuracy)});
    }
  }
  emit(report, s.config(), format, out);
}

void run_mix(Session& s, Variant kind, const std::vector<float>& values, ReportFormat format, std::ostream& out) {
  std::vector<std::string> columns{"kind", "mix", "clean_acc"};
  for (float eps : s.config().epsilons) columns.push_back("attacked_acc@" + format_number(eps));
  Report report(columns);
  const Dataset set = s.attack_set();
  for (float mix : values) {
    ModelSpec spec = s.config().model_spec(kind);
    spec.mix = mix;
    spec.validate();
    const ModelInstance m = s.model(spec);
    std::vector<ReportCell> row{std::string(variant_name(kind)), static_cast<double>(mix),
                                static_cast<double>(evaluate(m, set))};
    for (float eps : s.config().epsilons) {
      row.push_back(static_cast<double>(
          run_attack(m, set.images, set.labels, s.config().attack_config(eps)).attacked_accuracy()));
    }
    report.add_row(std::move(row));
  }
  emit(report, s.config(), format, out);
}

void run_probe(Session& s, ReportFormat format, std::ostream& out) {
  Report report({"model", "epsilon", "INIT", "CONV1", "CONV2", "FC"});
  const Dataset set = s.attack_set();
  for (Variant v : s.config().variants) {
    const ModelInstance m = s.model(v);
    for (float eps : s.config().epsilons) {
      const auto batch = run_attack(m, set.images, set.labels, s.config().attack_config(eps));
      const auto cos = cosine_probe(m, batch.original, batch.adversarial);
      std::vector<ReportCell> row{m.spec().label(), static_cast<double>(eps)};
      for (Probe p : kAllProbes) row.push_back(static_cast<double>(cos.at(p)));
      report.add_row(std::move(row));
    }
  }
  emit(report, s.config(), format, out);
}

void run_reconstruct(Session& s, ReportFormat format, std::ostream& out) {
  Report report({"model", "epsilon", "images", "ALL", "LFR", "HFR"});
  const Dataset set = s.attack_set();
  for (Variant v : s.config().variants) {
    const ModelInstance m = s.model(v);
    for (float eps : s.config().epsilons) {
      const auto batch = run_attack(m, set.images, set.labels, s.config().attack_config(eps));
      const auto t = reconstruction_eval(m, set, batch.adversarial);
      report.add_row({m.spec().label(), static_cast<double>(eps), std::string("clean"), static_cast<double>(t.clean[0]),
                      static_cast<double>(t.clean[1]), static_cast<double>(t.clean[2])});
      report.add_row({m.spec().label(), static_cast<double>(eps), std::string("adversarial"),
                      static_cast<double>(t.adversarial[0]), static_cast<double>(t.adversarial[1]),
                      static_cast<double>(t.adversarial[2])});
    }
  }
  emit(report, s.config(), format, out);
}

// Clean and frequency-domain adversarial histograms of the attack set, split
// into a fitting half and a held-out half.
struct DetectionData {
  std::vector<FrequencyHistogram> fit_clean, fit_adv, held_clean, held_adv;
};

DetectionData detection_data(Session& s, float epsilon) {
  const Dataset set = s.attack_set();
  const ModelInstance m = s.model(s.config().variants.front());
  AttackConfig a = s.config().attack_config(epsilon);
  a.domain = AttackDomain::kFrequency;
  const auto batch = pgd_frequency(m, set.images, set.labels, a);
  const auto clean = frequency_histogram(batch.original);
  const auto adv = frequency_histogram(batch.adversarial);
  DetectionData d;
  const auto half = clean.size() / 2;
  d.fit_clean.assign(clean.begin(), clean.begin() + static_cast<std::ptrdiff_t>(half));
  d.held_clean.assign(clean.begin() + static_cast<std::ptrdiff_t>(half), clean.end());
  d.fit_adv.assign(adv.begin(), adv.begin() + static_cast<std::ptrdiff_t>(half));
  d.held_adv.assign(adv.begin() + static_cast<std::ptrdiff_t>(half), adv.end());
  return d;
}

void run_detect(Session& s, const std::string& save, const std::string& apply, ReportFormat format,
                std::ostream& out) {
  Report report({"epsilon", "split", "clean", "adversarial", "accuracy", "depth"});
  for (float eps : s.config().epsilons) {
    const auto d = detection_data(s, eps);
    if (!apply.empty()) {
      const DetectorModel tree = load_detector(apply);
      std::vector<FrequencyHistogram> clean = d.fit_clean, adv = d.fit_adv;
      clean.insert(clean.end(), d.held_clean.begin(), d.held_clean.end());
      adv.insert(adv.end(), d.held_adv.begin(), d.held_adv.end());
      report.add_row({static_cast<double>(eps), std::string("all"), static_cast<std::int64_t>(clean.size()),
                      static_cast<std::int64_t>(adv.size()), detection_accuracy(tree, clean, adv),
                      std::int64_t{tree.depth()}});
      continue;
    }
    if (d.fit_clean.empty() || d.held_clean.empty()) throw Error("detect needs at least two attacked images");
    const DetectorModel tree = train_detector(d.fit_clean, d.fit_adv);
    report.add_row({static_cast<double>(eps), std::string("train"), static_cast<std::int64_t>(d.fit_clean.size()),
                    static_cast<std::int64_t>(d.fit_adv.size()), detection_accuracy(tree, d.fit_clean, d.fit_adv),
                    std::int64_t{tree.depth()}});
    report.add_row({static_cast<double>(eps), std::string("held-out"), static_cast<std::int64_t>(d.held_clean.size()),
                    static_cast<std::int64_t>(d.held_adv.size()),
                    detection_accuracy(tree, d.held_clean, d.held_adv), std::int64_t{tree.depth()}});
    if (!save.empty()) save_detector(tree, save);
  }
  emit(report, s.config(), format, out);
}

void run_gen_data(const RunConfig& c, std::ostream& out) {
  if (c.data.source != DataSource::kSynthetic) throw Error("gen-data only generates synthetic sets");
  const Dataset d = make_synthetic(SyntheticConfig{c.data.count, c.data.num_classes, c.data.height, c.data.width,
                                                   c.data.noise, c.seed, c.data.signal, c.data.clutter});
  write_cifar10_binary(d, c.out);
  out << "wrote " << d.size() << " images to " << c.out.string() << '\n';
}

}  // namespace

int cli_dispatch(std::span<const std::string> argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spatial-frequency CNN robustness experiments", "sflab"};
  app.require_subcommand(1);

  Overrides o;
  std::string save_dir, detector_save, detector_apply, domain = "pixel", mix_kind, mix_values_raw;
  std::vector<float> alphas, betas;

  auto* train_cmd = app.add_subcommand("train", "train models and report accuracy");
  add_common(train_cmd, o);
  train_cmd->add_option("--save", save_dir, "write one checkpoint per model under this directory");

  auto* attack_cmd = app.add_subcommand("attack", "white-box PGD attack");
  add_common(attack_cmd, o);
  attack_cmd->add_option("--domain", domain, "pixel or frequency")->check(CLI::IsMember({"pixel", "frequency"}));

  auto* transfer_cmd = app.add_subcommand("transfer", "transfer attack from a surrogate");
  add_common(transfer_cmd, o);
  std::string surrogate;
  transfer_cmd->add_option("--surrogate", surrogate, "surrogate variant");

  auto* mix_cmd = app.add_subcommand("mix", "sweep Interp / Subst stems");
  add_common(mix_cmd, o);
  mix_cmd->add_option("--kind", mix_kind, "interp or subst")->required()->check(CLI::IsMember({"interp", "subst"}));
  mix_cmd->add_option("--alphas", alphas, "Interp coefficients")->delimiter(',');
  mix_cmd->add_option("--betas", betas, "Subst coefficients")->delimiter(',');

  auto* probe_cmd = app.add_subcommand("probe", "cosine similarity of clean vs adversarial activations");
  add_common(probe_cmd, o);

  auto* recon_cmd = app.add_subcommand("reconstruct", "accuracy on low / high frequency reconstructions");
  add_common(recon_cmd, o);

  auto* detect_cmd = app.add_subcommand("detect", "train or apply the histogram detector");
  add_common(detect_cmd, o);
  detect_cmd->add_option("--save-detector", detector_save, "write the fitted tree here");
  detect_cmd->add_option("--detector", detector_apply, "apply this tree instead of fitting one")
      ->check(CLI::ExistingFile);

  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic set in CIFAR-10 binary format");
  add_common(gen_cmd, o);

  std::vector<std::string> args(argv.begin(), argv.end());
  if (args.empty()) args.emplace_back("sflab");
  std::vector<const char*> cargs;
  for (const auto& a : args) cargs.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::CallForHelp& e) {
    std::ostringstream usage;
    app.exit(e, usage, usage);
    out << usage.str();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::ostringstream msg;
    app.exit(e, msg, msg);
    err << msg.str() << app.help();
    return kExitUsage;
  }

  try {
    RunConfig config = resolve_config(o);
    if (!surrogate.empty()) config.surrogate = parse_variant(surrogate);
    const ReportFormat format = report_format(o, config);
    Session session(config, err);
    if (train_cmd->parsed()) {
      run_train(session, save_dir, format, out);
    } else if (attack_cmd->parsed()) {
      RunConfig c = config;
      c.attack_domain = parse_domain(domain);
      Session s(c, err);
      run_attack(s, format, out);
    } else if (transfer_cmd->parsed()) {
      const bool config_has_eps =
          !o.config.empty() && load_run_config(o.config).epsilons != RunConfig{}.epsilons;
      run_transfer(session, transfer_epsilons(o, config, config_has_eps), format, out);
    } else if (mix_cmd->parsed()) {
      const bool interp = mix_kind == "interp";
      std::vector<float> values = interp ? alphas : betas;
      if (values.empty()) {
        if (interp) values = {0.0f, 0.25f, 0.5f, 0.75f, 1.0f};
        else values = {0.0f, 1.0f / 64, 1.0f / 16, 0.25f, 1.0f};
      }
      run_mix(session, interp ? Variant::kInterp : Variant::kSubst, values, format, out);
    } else if (probe_cmd->parsed()) {
      run_probe(session, format, out);
    } else if (recon_cmd->parsed()) {
      run_reconstruct(session, format, out);
    } else if (detect_cmd->parsed()) {
      run_detect(session, detector_save, detector_apply, format, out);
    } else if (gen_cmd->parsed()) {
      run_gen_data(config, out);
    }
  } catch (const std::exception& e) {
    err << "sflab: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace sflab
