#include "reffakd/cli.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "reffakd/dataset.hpp"
#include "reffakd/model_zoo.hpp"
#include "reffakd/profiler.hpp"
#include "reffakd/softlabel.hpp"
#include "reffakd/synth.hpp"
#include "reffakd/train.hpp"

namespace reffakd {

namespace {

struct Opt {
  const char* name;
  const char* def;
  bool required = false;
};

/// Resolved key/value options for one subcommand, echoable as an option file
/// that reproduces the run.
class Options {
 public:
  Options(std::string subcommand, std::vector<Opt> decls,
          const std::vector<std::string>& args)
      : subcommand_(std::move(subcommand)), decls_(std::move(decls)) {
    std::map<std::string, std::string> flag_vals;
    std::string config_path;
    for (size_t i = 0; i < args.size(); ++i) {
      std::string tok = args[i];
      if (tok.rfind("--", 0) != 0)
        throw std::invalid_argument(subcommand_ + ": expected a --flag, got '" + tok + "'");
      tok = tok.substr(2);
      std::string key, value;
      const size_t eq = tok.find('=');
      if (eq != std::string::npos) {
        key = tok.substr(0, eq);
        value = tok.substr(eq + 1);
      } else {
        key = tok;
        if (i + 1 >= args.size())
          throw std::invalid_argument(subcommand_ + ": flag --" + key + " needs a value");
        value = args[++i];
      }
      if (key == "config") {
        config_path = value;
        continue;
      }
      require_known(key);
      flag_vals[key] = value;
    }

    std::map<std::string, std::string> file_vals;
    if (!config_path.empty()) file_vals = parse_option_file(config_path);

    for (const Opt& o : decls_) {
      auto f = flag_vals.find(o.name);
      if (f != flag_vals.end()) {
        values_[o.name] = f->second;
        continue;
      }
      auto c = file_vals.find(o.name);
      values_[o.name] = c != file_vals.end() ? c->second : o.def;
    }
    for (const Opt& o : decls_)
      if (o.required && values_[o.name].empty())
        throw std::invalid_argument(subcommand_ + ": missing required flag --" +
                                    std::string(o.name));
  }

  const std::string& str(const std::string& key) const { return values_.at(key); }
  bool has(const std::string& key) const { return !values_.at(key).empty(); }

  int integer(const std::string& key) const {
    try {
      size_t used = 0;
      const int v = std::stoi(str(key), &used);
      if (used != str(key).size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument(subcommand_ + ": --" + key + " is not an integer: '" +
                                  str(key) + "'");
    }
  }
  double real(const std::string& key) const {
    try {
      size_t used = 0;
      const double v = std::stod(str(key), &used);
      if (used != str(key).size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument(subcommand_ + ": --" + key + " is not a number: '" +
                                  str(key) + "'");
    }
  }
  uint64_t unsigned64(const std::string& key) const {
    try {
      size_t used = 0;
      const uint64_t v = std::stoull(str(key), &used);
      if (used != str(key).size()) throw std::invalid_argument("");
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument(subcommand_ + ": --" + key + " is not an unsigned integer: '" +
                                  str(key) + "'");
    }
  }
  bool boolean(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "0" || v == "false") return false;
    if (v == "1" || v == "true") return true;
    throw std::invalid_argument(subcommand_ + ": --" + key + " must be 0 or 1, got '" + v + "'");
  }
  std::vector<int> int_list(const std::string& key) const {
    std::vector<int> out;
    for (const std::string& part : split_commas(str(key))) {
      try {
        out.push_back(std::stoi(part));
      } catch (const std::exception&) {
        throw std::invalid_argument(subcommand_ + ": --" + key + " has a non-integer entry '" +
                                    part + "'");
      }
    }
    return out;
  }
  std::vector<double> real_list(const std::string& key) const {
    std::vector<double> out;
    for (const std::string& part : split_commas(str(key))) {
      try {
        out.push_back(std::stod(part));
      } catch (const std::exception&) {
        throw std::invalid_argument(subcommand_ + ": --" + key + " has a non-numeric entry '" +
                                    part + "'");
      }
    }
    return out;
  }

  /// Resolved options as a loadable `key = value` file (empty optionals
  /// omitted; their default is empty, so the round trip is exact).
  std::string echo() const {
    std::string out;
    for (const Opt& o : decls_) {
      const std::string& v = values_.at(o.name);
      if (v.empty() && o.def[0] == '\0') continue;
      out += o.name;
      out += " = ";
      out += v;
      out += "\n";
    }
    return out;
  }

  const std::string& subcommand() const { return subcommand_; }

 private:
  void require_known(const std::string& key) const {
    for (const Opt& o : decls_)
      if (key == o.name) return;
    throw std::invalid_argument(subcommand_ + ": unknown option '" + key + "'");
  }

  std::map<std::string, std::string> parse_option_file(const std::string& path) const {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(subcommand_ + ": cannot open config file: " + path);
    std::map<std::string, std::string> out;
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
      ++lineno;
      const size_t hash = raw.find('#');
      if (hash != std::string::npos) raw.resize(hash);
      const std::string line = trim(raw);
      if (line.empty()) continue;
      const size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                    ": expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw std::invalid_argument(path + ":" + std::to_string(lineno) + ": empty key");
      require_known(key);
      out[key] = value;
    }
    return out;
  }

  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  }
  static std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
      if (ch == ',') {
        out.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    out.push_back(cur);
    return out;
  }

  std::string subcommand_;
  std::vector<Opt> decls_;
  std::map<std::string, std::string> values_;
};

uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string run_root() {
  const char* env = std::getenv("REFFAKD_RUN_DIR");
  return env && env[0] != '\0' ? env : "runs";
}

/// Creates `<root>/<subcommand>-<confighash>-s<seed>` and drops the resolved
/// config echo inside, so any run is reproducible from its own directory.
std::string make_run_dir(const Options& opts, uint64_t seed) {
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(fnv1a64(opts.echo())));
  const std::string dir =
      run_root() + "/" + opts.subcommand() + "-" + hash + "-s" + std::to_string(seed);
  std::filesystem::create_directories(dir);
  std::ofstream cfg(dir + "/config.txt");
  if (!cfg) throw std::runtime_error("cannot write " + dir + "/config.txt");
  cfg << opts.echo();
  return dir;
}

const std::vector<Opt> kTrainDataOpts = {
    {"dataset", "", true}, {"images", ""},         {"labels", ""},
    {"bin", ""},           {"per_class", "1000"},  {"data_seed", "1234"},
};
const std::vector<Opt> kTestDataOpts = {
    {"test_images", ""}, {"test_labels", ""}, {"test_bin", ""}, {"test_per_class", "200"},
};

Dataset load_train_dataset(const Options& opts) {
  const std::string kind = opts.str("dataset");
  if (kind == "idx") {
    if (!opts.has("images") || !opts.has("labels"))
      throw std::invalid_argument(opts.subcommand() +
                                  ": dataset idx needs --images and --labels");
    return load_idx(opts.str("images"), opts.str("labels"), "train");
  }
  if (kind == "cifar100") {
    if (!opts.has("bin"))
      throw std::invalid_argument(opts.subcommand() + ": dataset cifar100 needs --bin");
    return load_cifar100(opts.str("bin"), "train");
  }
  if (kind == "tiny") {
    if (!opts.has("bin"))
      throw std::invalid_argument(opts.subcommand() + ": dataset tiny needs --bin");
    return load_tiny_records(opts.str("bin"), "train");
  }
  if (kind == "synth")
    return make_synth_dataset(opts.integer("per_class"), opts.unsigned64("data_seed"), "train");
  throw std::invalid_argument(opts.subcommand() + ": unknown dataset kind '" + kind +
                              "' (expected idx, cifar100, tiny, or synth)");
}

Dataset load_test_dataset(const Options& opts) {
  const std::string kind = opts.str("dataset");
  if (kind == "idx") {
    if (!opts.has("test_images") || !opts.has("test_labels"))
      throw std::invalid_argument(opts.subcommand() +
                                  ": dataset idx needs --test_images and --test_labels");
    return load_idx(opts.str("test_images"), opts.str("test_labels"), "test");
  }
  if (kind == "cifar100") {
    if (!opts.has("test_bin"))
      throw std::invalid_argument(opts.subcommand() + ": dataset cifar100 needs --test_bin");
    return load_cifar100(opts.str("test_bin"), "test");
  }
  if (kind == "tiny") {
    if (!opts.has("test_bin"))
      throw std::invalid_argument(opts.subcommand() + ": dataset tiny needs --test_bin");
    return load_tiny_records(opts.str("test_bin"), "test");
  }
  if (kind == "synth")
    return make_synth_dataset(opts.integer("test_per_class"),
                              opts.unsigned64("data_seed") + 1, "test");
  throw std::invalid_argument(opts.subcommand() + ": unknown dataset kind '" + kind + "'");
}

std::vector<Opt> concat(std::initializer_list<std::vector<Opt>> groups) {
  std::vector<Opt> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

const std::vector<Opt> kRecipeOpts = {
    {"epochs", "200"},       {"batch_size", "128"},        {"lr", "0.1"},
    {"momentum", "0.9"},     {"weight_decay", "0.0005"},   {"decay_factor", "0.2"},
    {"decay_epochs", "60,120,160"},
};

TrainConfig recipe_config(const Options& opts) {
  TrainConfig cfg;
  cfg.epochs = opts.integer("epochs");
  cfg.batch_size = opts.integer("batch_size");
  cfg.lr = opts.real("lr");
  cfg.momentum = opts.real("momentum");
  cfg.weight_decay = opts.real("weight_decay");
  cfg.decay_factor = opts.real("decay_factor");
  cfg.decay_epochs = opts.int_list("decay_epochs");
  cfg.seed = opts.unsigned64("seed");
  return cfg;
}

int cmd_train_cae(const std::vector<std::string>& args) {
  Options opts("train-cae",
               concat({kTrainDataOpts, kRecipeOpts, {{"seed", "0"}, {"augment", "0"}}}), args);
  TrainConfig cfg = recipe_config(opts);
  cfg.mode = TrainMode::kCae;
  cfg.augment.enabled = opts.boolean("augment");
  validate_train_config(cfg);

  const Dataset train = load_train_dataset(opts);
  const std::string dir = make_run_dir(opts, cfg.seed);
  cfg.checkpoint_path = dir + "/cae.ckpt";

  Model cae(build_cae(train.channels, train.height, train.width), cfg.seed);
  const RunRecord record = train_cae(cae, cfg, train);
  write_metrics_csv(record, dir + "/" + metrics_filename(cfg));
  std::cout << "run dir: " << dir << "\n";
  std::cout << "final train mse: " << record.train_loss.back() << "\n";
  std::cout << "checkpoint: " << cfg.checkpoint_path << "\n";
  return 0;
}

int cmd_gen_softlabels(const std::vector<std::string>& args) {
  Options opts("gen-softlabels",
               concat({kTrainDataOpts,
                       {{"checkpoint", "", true},
                        {"n", "40"},
                        {"gamma_step", "0.0005"},
                        {"seed", "0"}}}),
               args);
  const Dataset train = load_train_dataset(opts);
  const int n = opts.integer("n");
  const double step = opts.real("gamma_step");
  const uint64_t seed = opts.unsigned64("seed");

  Model cae(build_cae(train.channels, train.height, train.width), seed);
  cae.load_checkpoint(opts.str("checkpoint"));

  const EmbeddingSet emb = extract_embeddings(cae, train, n, seed);
  const double gamma = find_min_gamma(emb, step);
  const SimilarityMatrix sim = build_similarity_matrix(emb, gamma);
  SoftLabelProvenance prov;
  prov.dataset_id = opts.str("dataset");
  prov.checkpoint_id = opts.str("checkpoint");
  prov.n = n;
  prov.gamma = gamma;
  prov.seed = seed;
  const SoftLabelTable table = to_soft_labels(sim, prov);

  const std::string dir = make_run_dir(opts, seed);
  save_soft_label_table(table, dir + "/softlabels.txt");
  std::cout << "run dir: " << dir << "\n";
  std::cout << "classes: " << table.c << "\n";
  std::cout << "gamma: " << gamma << "\n";
  std::cout << "table: " << dir << "/softlabels.txt\n";
  return 0;
}

/// Shared by train-student and grid: loads splits, builds models and the
/// teacher signal. Owns the teacher/table storage.
struct StudentSetup {
  Dataset train;
  Dataset test;
  ModelSpec student_spec;
  std::unique_ptr<Model> teacher;
  SoftLabelTable table;
  TeacherSignal signal;
};

StudentSetup prepare_student(const Options& opts, TrainMode mode) {
  StudentSetup s;
  s.train = load_train_dataset(opts);
  s.test = load_test_dataset(opts);
  s.student_spec = build_named_model(opts.str("model"), s.train.num_classes, s.train.channels,
                                     s.train.height, s.train.width);
  if (mode == TrainMode::kVanillaKd) {
    if (!opts.has("teacher_checkpoint"))
      throw std::invalid_argument(opts.subcommand() +
                                  ": mode vanilla_kd needs --teacher_checkpoint");
    s.teacher = std::make_unique<Model>(
        build_named_model(opts.str("teacher_model"), s.train.num_classes, s.train.channels,
                          s.train.height, s.train.width),
        0);
    s.teacher->load_checkpoint(opts.str("teacher_checkpoint"));
    s.signal.teacher = s.teacher.get();
  } else if (mode == TrainMode::kReffakd) {
    if (!opts.has("table"))
      throw std::invalid_argument(opts.subcommand() + ": mode reffakd needs --table");
    s.table = load_soft_label_table(opts.str("table"));
    s.signal.table = &s.table;
  }
  return s;
}

const std::vector<Opt> kStudentOpts = {
    {"mode", "", true},
    {"model", "lenet5"},
    {"table", ""},
    {"teacher_checkpoint", ""},
    {"teacher_model", "resnet50"},
    {"seed", "0"},
    {"augment", "1"},
};

int cmd_train_student(const std::vector<std::string>& args) {
  Options opts("train-student",
               concat({kTrainDataOpts, kTestDataOpts, kRecipeOpts, kStudentOpts,
                       {{"T", "5"}, {"alpha", "0.8"}}}),
               args);
  TrainConfig cfg = recipe_config(opts);
  cfg.mode = parse_train_mode(opts.str("mode"));
  cfg.temperature = opts.real("T");
  cfg.alpha = opts.real("alpha");
  cfg.augment.enabled = opts.boolean("augment");
  validate_train_config(cfg);
  if (cfg.mode == TrainMode::kCae)
    throw std::invalid_argument("train-student: use train-cae for mode cae");

  StudentSetup s = prepare_student(opts, cfg.mode);
  const std::string dir = make_run_dir(opts, cfg.seed);
  Model student(s.student_spec, cfg.seed);
  const RunRecord record = train_student(student, cfg, s.train, s.test, s.signal);
  const std::string csv = dir + "/" + metrics_filename(cfg);
  write_metrics_csv(record, csv);
  std::cout << "run dir: " << dir << "\n";
  std::cout << "best top-1: " << record.best_acc << "% (epoch " << (record.best_epoch + 1)
            << ")\n";
  std::cout << "metrics: " << csv << "\n";
  return 0;
}

int cmd_grid(const std::vector<std::string>& args) {
  Options opts("grid",
               concat({kTrainDataOpts, kTestDataOpts, kRecipeOpts, kStudentOpts,
                       {{"T_list", "1,5,10,20"},
                        {"alpha_list", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"}}}),
               args);
  TrainConfig base = recipe_config(opts);
  base.mode = parse_train_mode(opts.str("mode"));
  base.augment.enabled = opts.boolean("augment");
  if (base.mode == TrainMode::kCae)
    throw std::invalid_argument("grid: use train-cae for mode cae");

  StudentSetup s = prepare_student(opts, base.mode);
  const std::string dir = make_run_dir(opts, base.seed);
  const GridResult result = run_grid(s.student_spec, base, opts.real_list("T_list"),
                                     opts.real_list("alpha_list"), s.train, s.test, s.signal);
  for (const RunRecord& r : result.records)
    write_metrics_csv(r, dir + "/" + metrics_filename(r.config));
  {
    std::ofstream out(dir + "/summary.csv");
    if (!out) throw std::runtime_error("cannot write " + dir + "/summary.csv");
    out << grid_summary_csv(result.records);
  }
  std::cout << "run dir: " << dir << "\n";
  std::cout << "cells: " << result.records.size() << " ok, " << result.failures.size()
            << " failed\n";
  std::cout << "summary: " << dir << "/summary.csv\n";
  return result.failures.empty() ? 0 : 2;
}

ModelSpec spec_from_opts(const Options& opts, const std::string& spec_key,
                         const std::string& model_key, const std::string& input_key,
                         int classes) {
  const bool have_spec = opts.has(spec_key);
  const bool have_model = opts.has(model_key);
  if (have_spec == have_model)
    throw std::invalid_argument(opts.subcommand() + ": give exactly one of --" + spec_key +
                                " or --" + model_key);
  int c = 3, h = 32, w = 32;
  bool have_input = opts.has(input_key);
  if (have_input) {
    const std::string& v = opts.str(input_key);
    if (std::sscanf(v.c_str(), "%dx%dx%d", &c, &h, &w) != 3)
      throw std::invalid_argument(opts.subcommand() + ": --" + input_key +
                                  " must look like CxHxW, got '" + v + "'");
  }
  if (have_spec) {
    ModelSpec spec = load_model_spec(opts.str(spec_key));
    if (have_input) {
      spec.in_channels = c;
      spec.in_height = h;
      spec.in_width = w;
    }
    return spec;
  }
  return build_named_model(opts.str(model_key), classes, c, h, w);
}

int cmd_profile(const std::vector<std::string>& args) {
  Options opts("profile",
               {{"spec", ""},
                {"model", ""},
                {"classes", "100"},
                {"input", ""},
                {"csv", ""},
                {"emit_spec", ""}},
               args);
  const ModelSpec spec =
      spec_from_opts(opts, "spec", "model", "input", opts.integer("classes"));
  if (opts.has("emit_spec")) save_model_spec(spec, opts.str("emit_spec"));
  const ResourceReport report = profile(spec);
  std::cout << format_report(report);
  if (opts.has("csv")) {
    std::ofstream out(opts.str("csv"));
    if (!out) throw std::runtime_error("cannot write " + opts.str("csv"));
    out << report_csv(report);
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& args) {
  Options opts("compare",
               {{"a_spec", ""},
                {"a_model", ""},
                {"a_input", ""},
                {"b_spec", ""},
                {"b_model", ""},
                {"b_input", ""},
                {"classes", "100"}},
               args);
  const int classes = opts.integer("classes");
  const ModelSpec a = spec_from_opts(opts, "a_spec", "a_model", "a_input", classes);
  const ModelSpec b = spec_from_opts(opts, "b_spec", "b_model", "b_input", classes);
  std::cout << compare_reports(profile(a), profile(b));
  return 0;
}

void print_usage() {
  std::cerr <<
      "usage: reffakd <subcommand> [--config FILE] [--key value ...]\n"
      "\n"
      "subcommands:\n"
      "  train-cae       train the autoencoder, save its best checkpoint\n"
      "  gen-softlabels  build the soft-label table from a CAE checkpoint\n"
      "  train-student   train a classifier (baseline, vanilla_kd, or reffakd)\n"
      "  grid            sweep temperature/alpha cells of train-student\n"
      "  profile         static FLOPs/MACs/params/memory report for a model\n"
      "  compare         ratio report between two models\n"
      "\n"
      "Options may come from a `key = value` file via --config; flags override\n"
      "the file. Run outputs land under ./runs (override with REFFAKD_RUN_DIR).\n";
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  if (args.empty()) {
    print_usage();
    return 1;
  }
  const std::string sub = args[0];
  const std::vector<std::string> rest(args.begin() + 1, args.end());
  try {
    if (sub == "train-cae") return cmd_train_cae(rest);
    if (sub == "gen-softlabels") return cmd_gen_softlabels(rest);
    if (sub == "train-student") return cmd_train_student(rest);
    if (sub == "grid") return cmd_grid(rest);
    if (sub == "profile") return cmd_profile(rest);
    if (sub == "compare") return cmd_compare(rest);
    print_usage();
    std::cerr << "unknown subcommand '" << sub << "'\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace reffakd
