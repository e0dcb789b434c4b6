#include "protomatch/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace protomatch {

namespace {

struct Field {
  std::string section;
  std::string key;
  std::string accepts;  // shown in parse errors
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct BadValue {
  std::string expected;
};

long long parse_int(const std::string& v) {
  long long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw BadValue{"an integer"};
  return out;
}

double parse_real(const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw BadValue{"a real number"};
  }
  if (used != v.size()) throw BadValue{"a real number"};
  return out;
}

std::string real_str(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

template <typename T>
Field int_field(std::string section, std::string key, T RunConfig::*group, auto member) {
  return {section, key, "integer",
          [group, member](RunConfig& c, const std::string& v) {
            (c.*group).*member = static_cast<std::remove_reference_t<decltype((c.*group).*member)>>(parse_int(v));
          },
          [group, member](const RunConfig& c) { return std::to_string((c.*group).*member); }};
}

template <typename T>
Field real_field(std::string section, std::string key, T RunConfig::*group, auto member) {
  return {section, key, "real",
          [group, member](RunConfig& c, const std::string& v) { (c.*group).*member = parse_real(v); },
          [group, member](const RunConfig& c) { return real_str((c.*group).*member); }};
}

template <typename E>
Field enum_field(std::string section, std::string key, std::vector<std::pair<std::string, E>> values,
                 std::function<E&(RunConfig&)> ref) {
  std::string accepts;
  for (const auto& [name, _] : values) accepts += (accepts.empty() ? "" : " | ") + name;
  return {section, key, accepts,
          [values, ref, accepts](RunConfig& c, const std::string& v) {
            for (const auto& [name, e] : values) {
              if (name == v) {
                ref(c) = e;
                return;
              }
            }
            throw BadValue{"one of " + accepts};
          },
          [values, ref](const RunConfig& c) {
            const E e = ref(const_cast<RunConfig&>(c));
            for (const auto& [name, x] : values) {
              if (x == e) return name;
            }
            return std::string("?");
          }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = [] {
    std::vector<Field> f;
    f.push_back(enum_field<DataSource>("data", "source", {{"synth", DataSource::kSynth}, {"file", DataSource::kFile}},
                                       [](RunConfig& c) -> DataSource& { return c.source; }));
    f.push_back({"data", "path", "path", [](RunConfig& c, const std::string& v) { c.data_path = v; },
                 [](const RunConfig& c) { return c.data_path.string(); }});

    using S = SynthConfig;
    f.push_back(int_field("synth", "subjects", &RunConfig::synth, &S::n_subjects));
    f.push_back(int_field("synth", "trials", &RunConfig::synth, &S::trials_per_subject));
    f.push_back(int_field("synth", "segments", &RunConfig::synth, &S::segments_per_trial));
    f.push_back(int_field("synth", "classes", &RunConfig::synth, &S::n_classes));
    f.push_back(int_field("synth", "feature_dim", &RunConfig::synth, &S::feature_dim));
    f.push_back(real_field("synth", "class_separation", &RunConfig::synth, &S::class_separation));
    f.push_back(real_field("synth", "subject_shift", &RunConfig::synth, &S::subject_shift));
    f.push_back(real_field("synth", "trial_drift", &RunConfig::synth, &S::trial_drift));
    f.push_back(real_field("synth", "noise", &RunConfig::synth, &S::noise));
    f.push_back(int_field("synth", "seed", &RunConfig::synth, &S::seed));

    using T = TrainConfig;
    f.push_back(int_field("train", "max_epoch", &RunConfig::train, &T::max_epoch));
    f.push_back(int_field("train", "steps_per_epoch", &RunConfig::train, &T::steps_per_epoch));
    f.push_back({"train", "batch_labeled", "integer",
                 [](RunConfig& c, const std::string& v) { c.train.batch.labeled = parse_int(v); },
                 [](const RunConfig& c) { return std::to_string(c.train.batch.labeled); }});
    f.push_back({"train", "batch_unlabeled", "integer",
                 [](RunConfig& c, const std::string& v) { c.train.batch.unlabeled = parse_int(v); },
                 [](const RunConfig& c) { return std::to_string(c.train.batch.unlabeled); }});
    f.push_back({"train", "batch_target", "integer",
                 [](RunConfig& c, const std::string& v) { c.train.batch.target = parse_int(v); },
                 [](const RunConfig& c) { return std::to_string(c.train.batch.target); }});
    f.push_back(real_field("train", "learning_rate", &RunConfig::train, &T::learning_rate));
    f.push_back(real_field("train", "weight_decay", &RunConfig::train, &T::weight_decay));
    f.push_back(real_field("train", "rms_decay", &RunConfig::train, &T::rms_decay));
    f.push_back(real_field("train", "rms_epsilon", &RunConfig::train, &T::rms_epsilon));
    f.push_back({"train", "alpha", "real", [](RunConfig& c, const std::string& v) { c.train.mixup.alpha = parse_real(v); },
                 [](const RunConfig& c) { return real_str(c.train.mixup.alpha); }});
    f.push_back({"train", "mixup_ratio", "real",
                 [](RunConfig& c, const std::string& v) { c.train.mixup.ratio = parse_real(v); },
                 [](const RunConfig& c) { return real_str(c.train.mixup.ratio); }});
    f.push_back(enum_field<MixupMode>(
        "train", "mixup_mode", {{"eeg", MixupMode::kEeg}, {"standard", MixupMode::kStandard}, {"off", MixupMode::kOff}},
        [](RunConfig& c) -> MixupMode& { return c.train.mixup.mode; }));
    f.push_back({"train", "eta", "real", [](RunConfig& c, const std::string& v) { c.train.weights.eta = parse_real(v); },
                 [](const RunConfig& c) { return real_str(c.train.weights.eta); }});
    f.push_back(real_field("train", "tau_high0", &RunConfig::train, &T::tau_high0));
    f.push_back(real_field("train", "tau_low0", &RunConfig::train, &T::tau_low0));
    f.push_back({"train", "delta", "real",
                 [](RunConfig& c, const std::string& v) { c.train.weights.delta = parse_real(v); },
                 [](const RunConfig& c) { return real_str(c.train.weights.delta); }});
    f.push_back({"train", "beta", "real", [](RunConfig& c, const std::string& v) { c.train.weights.beta = parse_real(v); },
                 [](const RunConfig& c) { return real_str(c.train.weights.beta); }});
    f.push_back(real_field("train", "ridge", &RunConfig::train, &T::ridge));
    f.push_back(int_field("train", "hidden_width", &RunConfig::train, &T::hidden_width));
    f.push_back(int_field("train", "feature_width", &RunConfig::train, &T::feature_width));
    f.push_back(real_field("train", "dropout", &RunConfig::train, &T::dropout));
    f.push_back(int_field("train", "seed", &RunConfig::train, &T::seed));
    f.push_back({"train", "ablations", "comma list of " + [] {
                   std::string s = "none";
                   for (const auto& n : Ablations::names()) s += ", " + n;
                   return s;
                 }(),
                 [](RunConfig& c, const std::string& v) {
                   c.train.ablations = Ablations{};
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ',')) c.train.ablations.set(trim(item));
                 },
                 [](const RunConfig& c) { return c.train.ablations.to_string(); }});
    f.push_back(int_field("train", "n_labeled_trials", &RunConfig::train, &T::n_labeled_trials));
    f.push_back(int_field("train", "split_target_k", &RunConfig::train, &T::split_target_k));
    f.push_back(enum_field<PiMode>("train", "pi_mode", {{"proportion", PiMode::kProportion}, {"grid", PiMode::kGrid}},
                                   [](RunConfig& c) -> PiMode& { return c.train.pi_mode; }));
    f.push_back(int_field("train", "report_every", &RunConfig::train, &T::report_every));
    f.push_back(int_field("train", "mmd_samples", &RunConfig::train, &T::mmd_samples));
    f.push_back(enum_field<InferencePrototypes>(
        "train", "inference_prototypes",
        {{"last_step", InferencePrototypes::kLastStep}, {"recompute", InferencePrototypes::kRecompute}},
        [](RunConfig& c) -> InferencePrototypes& { return c.train.inference_prototypes; }));

    f.push_back({"run", "out", "path", [](RunConfig& c, const std::string& v) { c.out_dir = v; },
                 [](const RunConfig& c) { return c.out_dir.string(); }});
    f.push_back({"run", "folds_parallel", "integer",
                 [](RunConfig& c, const std::string& v) { c.folds_parallel = static_cast<int>(parse_int(v)); },
                 [](const RunConfig& c) { return std::to_string(c.folds_parallel); }});
    f.push_back({"run", "target_subject", "integer or none",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "none") {
                     c.target_subject.reset();
                   } else {
                     c.target_subject = static_cast<int>(parse_int(v));
                   }
                 },
                 [](const RunConfig& c) {
                   return c.target_subject ? std::to_string(*c.target_subject) : std::string("none");
                 }});
    return f;
  }();
  return kFields;
}

std::string valid_keys(const std::string& section) {
  std::string out;
  for (const auto& f : fields()) {
    if (f.section == section) out += (out.empty() ? "" : ", ") + f.key;
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  train.validate();
  if (source == DataSource::kSynth) {
    synth.validate();
  } else if (data_path.empty()) {
    throw Error("config: [data] source = file requires path");
  }
  if (folds_parallel < 1) throw Error("config: folds_parallel must be positive");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.section + "." + f.key);
  return out;
}

RunConfig parse_config(std::istream& in, const std::string& source_name) {
  RunConfig cfg;
  std::string section;
  std::string raw;
  int line_no = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw Error(source_name + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw.substr(0, raw.find('#')));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "data" && section != "synth" && section != "train" && section != "run") {
        fail("unknown section [" + section + "]; valid sections: data, synth, train, run");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value', got '" + line + "'");
    if (section.empty()) fail("key outside any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (f.section == section && f.key == key) field = &f;
    }
    if (!field) fail("unknown key '" + key + "' in [" + section + "]; valid keys: " + valid_keys(section));
    try {
      field->set(cfg, value);
    } catch (const BadValue& b) {
      fail("key '" + key + "' expects " + b.expected + ", got '" + value + "'");
    } catch (const Error& e) {
      fail("key '" + key + "': " + e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(source_name + ": " + e.what());
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  return parse_config(in, path.string());
}

std::string format_config(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

}  // namespace protomatch
