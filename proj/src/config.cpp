#include "dprf/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dprf/rng.hpp"

namespace dprf {

namespace {

std::string join(const std::vector<std::string>& parts) {
    std::string out = "invalid config:";
    for (const auto& p : parts) out += "\n  - " + p;
    return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join(problems)), violations(std::move(problems)) {}

void RunConfig::finalize() {
    synthetic.seed = seed;
    baseline_train.seed = seed;
    prf_train.seed = seed;
    baseline_train.threads = threads;
    prf_train.threads = threads;
    baseline_train.k = 0;  // the baseline phase consumes no feedback docs
}

RunConfig default_run_config() {
    RunConfig config;
    config.baseline_train.total_steps = 1200;
    config.baseline_train.eval_interval = 200;
    config.prf_train.total_steps = 800;
    config.prf_train.eval_interval = 100;
    config.finalize();
    return config;
}

namespace {

struct Parser {
    RunConfig config = default_run_config();
    std::vector<std::string> problems;

    using Setter = std::function<void(const std::string&)>;
    std::map<std::string, Setter> setters;

    template <typename T>
    void number(const std::string& key, T& field) {
        setters[key] = [this, key, &field](const std::string& value) {
            std::istringstream ss(value);
            T parsed{};
            if (!(ss >> parsed) || !ss.eof())
                problems.push_back(key + ": cannot parse '" + value + "'");
            else
                field = parsed;
        };
    }

    void boolean(const std::string& key, bool& field) {
        setters[key] = [this, key, &field](const std::string& value) {
            if (value == "true" || value == "1") field = true;
            else if (value == "false" || value == "0") field = false;
            else problems.push_back(key + ": expected true/false, got '" + value + "'");
        };
    }

    void text(const std::string& key, std::string& field) {
        setters[key] = [&field](const std::string& value) { field = value; };
    }

    void size_list(const std::string& key, std::vector<std::size_t>& field) {
        setters[key] = [this, key, &field](const std::string& value) {
            std::vector<std::size_t> parsed;
            std::istringstream ss(value);
            std::string item;
            while (std::getline(ss, item, ',')) {
                try {
                    std::size_t pos = 0;
                    parsed.push_back(std::stoull(item, &pos));
                    if (pos != item.size()) throw std::invalid_argument(item);
                } catch (const std::exception&) {
                    problems.push_back(key + ": cannot parse list item '" + item + "'");
                    return;
                }
            }
            if (parsed.empty()) {
                problems.push_back(key + ": empty list");
                return;
            }
            field = parsed;
        };
    }

    void register_keys() {
        auto& c = config;
        text("run.out_dir", c.out_dir);
        number("run.seed", c.seed);
        number("run.threads", c.threads);

        number("synthetic.num_topics", c.synthetic.num_topics);
        number("synthetic.docs_per_topic", c.synthetic.docs_per_topic);
        number("synthetic.topic_vocab_size", c.synthetic.topic_vocab_size);
        number("synthetic.noise_vocab_size", c.synthetic.noise_vocab_size);
        number("synthetic.doc_len_min", c.synthetic.doc_len_min);
        number("synthetic.doc_len_max", c.synthetic.doc_len_max);
        number("synthetic.query_len", c.synthetic.query_len);
        number("synthetic.p_topic", c.synthetic.p_topic);
        number("synthetic.core_fraction", c.synthetic.core_fraction);
        number("synthetic.train_queries", c.synthetic.train_queries);
        number("synthetic.dev_queries", c.synthetic.dev_queries);
        number("synthetic.test_queries", c.synthetic.test_queries);

        number("model.num_layers", c.model.num_layers);
        number("model.num_heads", c.model.num_heads);
        number("model.model_dim", c.model.model_dim);
        number("model.ff_dim", c.model.ff_dim);
        number("model.max_len", c.model.max_len);
        number("model.query_budget", c.model.query_budget);
        number("model.vocab_min_count", c.vocab_min_count);

        for (auto [section, train] :
             {std::pair{"train_baseline", &c.baseline_train}, {"train_prf", &c.prf_train}}) {
            const std::string s(section);
            number(s + ".negatives_per_example", train->negatives_per_example);
            number(s + ".batch_size", train->batch_size);
            number(s + ".accumulation_steps", train->accumulation_steps);
            number(s + ".learning_rate", train->learning_rate);
            number(s + ".warmup_fraction", train->warmup_fraction);
            number(s + ".total_steps", train->total_steps);
            number(s + ".eval_interval", train->eval_interval);
            boolean(s + ".in_batch_negatives", train->in_batch_negatives);
        }
        number("train_prf.k", c.prf_train.k);

        number("retrieval.first_pass_depth", c.retrieval.first_pass_depth);
        number("retrieval.final_depth", c.retrieval.final_depth);
        size_list("retrieval.prf_ks", c.prf_ks);
    }
};

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    Parser parser;
    parser.register_keys();

    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t.front() == '[' && t.back() == ']') {
            section = trim(t.substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            parser.problems.push_back("line " + std::to_string(lineno) +
                                      ": expected 'key = value'");
            continue;
        }
        const std::string key = trim(t.substr(0, eq));
        const std::string value = trim(t.substr(eq + 1));
        const std::string full = section.empty() ? key : section + "." + key;
        auto it = parser.setters.find(full);
        if (it == parser.setters.end()) {
            parser.problems.push_back("unknown key '" + full + "'");
            continue;
        }
        it->second(value);
    }

    parser.config.finalize();
    try {
        parser.config.synthetic.validate();
    } catch (const std::exception& e) {
        parser.problems.push_back(e.what());
    }
    try {
        parser.config.baseline_train.validate();
        parser.config.prf_train.validate();
    } catch (const std::exception& e) {
        parser.problems.push_back(e.what());
    }
    try {
        parser.config.retrieval.validate();
    } catch (const std::exception& e) {
        parser.problems.push_back(e.what());
    }
    if (parser.config.model.model_dim % parser.config.model.num_heads != 0)
        parser.problems.push_back("model_dim must be divisible by num_heads");
    if (parser.config.threads < 1) parser.problems.push_back("run.threads must be >= 1");
    for (auto k : parser.config.prf_ks)
        if (k > parser.config.retrieval.first_pass_depth)
            parser.problems.push_back("retrieval.prf_ks entry exceeds first_pass_depth");

    if (!parser.problems.empty()) throw ConfigError(parser.problems);
    return parser.config;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError({"cannot open '" + path + "'"});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string serialize_run_config(const RunConfig& config) {
    std::ostringstream out;
    char buf[64];
    auto real = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };

    out << "[run]\n";
    out << "out_dir = " << config.out_dir << '\n';
    out << "seed = " << config.seed << '\n';
    out << "threads = " << config.threads << '\n';
    out << "\n[synthetic]\n";
    const auto& s = config.synthetic;
    out << "num_topics = " << s.num_topics << '\n';
    out << "docs_per_topic = " << s.docs_per_topic << '\n';
    out << "topic_vocab_size = " << s.topic_vocab_size << '\n';
    out << "noise_vocab_size = " << s.noise_vocab_size << '\n';
    out << "doc_len_min = " << s.doc_len_min << '\n';
    out << "doc_len_max = " << s.doc_len_max << '\n';
    out << "query_len = " << s.query_len << '\n';
    out << "p_topic = " << real(s.p_topic) << '\n';
    out << "core_fraction = " << real(s.core_fraction) << '\n';
    out << "train_queries = " << s.train_queries << '\n';
    out << "dev_queries = " << s.dev_queries << '\n';
    out << "test_queries = " << s.test_queries << '\n';
    out << "\n[model]\n";
    out << "num_layers = " << config.model.num_layers << '\n';
    out << "num_heads = " << config.model.num_heads << '\n';
    out << "model_dim = " << config.model.model_dim << '\n';
    out << "ff_dim = " << config.model.ff_dim << '\n';
    out << "max_len = " << config.model.max_len << '\n';
    out << "query_budget = " << config.model.query_budget << '\n';
    out << "vocab_min_count = " << config.vocab_min_count << '\n';
    for (auto [name, train] : {std::pair{"train_baseline", &config.baseline_train},
                               {"train_prf", &config.prf_train}}) {
        out << "\n[" << name << "]\n";
        if (std::string(name) == "train_prf") out << "k = " << train->k << '\n';
        out << "negatives_per_example = " << train->negatives_per_example << '\n';
        out << "batch_size = " << train->batch_size << '\n';
        out << "accumulation_steps = " << train->accumulation_steps << '\n';
        out << "learning_rate = " << real(train->learning_rate) << '\n';
        out << "warmup_fraction = " << real(train->warmup_fraction) << '\n';
        out << "total_steps = " << train->total_steps << '\n';
        out << "eval_interval = " << train->eval_interval << '\n';
        out << "in_batch_negatives = " << (train->in_batch_negatives ? "true" : "false") << '\n';
    }
    out << "\n[retrieval]\n";
    out << "first_pass_depth = " << config.retrieval.first_pass_depth << '\n';
    out << "final_depth = " << config.retrieval.final_depth << '\n';
    out << "prf_ks = ";
    for (std::size_t i = 0; i < config.prf_ks.size(); ++i)
        out << (i ? "," : "") << config.prf_ks[i];
    out << '\n';
    return out.str();
}

std::string config_hash(const RunConfig& config) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(serialize_run_config(config))));
    return buf;
}

}  // namespace dprf
