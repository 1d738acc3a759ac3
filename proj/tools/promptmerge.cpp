// promptmerge: corpus synthesis, staged training and evaluation.
//
// Exit codes: 0 ok, 1 runtime failure, 2 bad configuration or arguments,
// 3 stage-order violation, 4 missing checkpoint.

#include "promptmerge/attn_viz.hpp"
#include "promptmerge/corpus_io.hpp"
#include "promptmerge/errors.hpp"
#include "promptmerge/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pm;

namespace {

enum ExitCode { ok = 0, failure = 1, config_error = 2, stage_error = 3, missing_checkpoint = 4 };

struct MissingCheckpoint : Error {
    using Error::Error;
};

// Overlays `user` onto `base`; every key must already exist in `base`.
void merge_strict(json& base, const json& user, const std::string& path = "") {
    if (!user.is_object()) throw ConfigError("config at '" + path + "' must be an object");
    for (const auto& [key, value] : user.items()) {
        const std::string where = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key: " + where);
        if (base[key].is_object() && value.is_object()) merge_strict(base[key], value, where);
        else base[key] = value;
    }
}

// key=value with a dotted key; the value is parsed as JSON when possible.
void apply_override(json& base, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    std::vector<std::string> parts;
    std::stringstream ss(key);
    for (std::string part; std::getline(ss, part, '.');) parts.push_back(part);
    json patch = value;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
    merge_strict(base, patch);
}

struct Common {
    std::string out;
    std::string run;
    std::string config_file;
    std::vector<std::string> overrides;
};

fs::path run_dir(const Common& c, const std::string& fallback) {
    fs::path root = c.out;
    if (root.empty()) {
        const char* env = std::getenv("PROMPTMERGE_OUT");
        root = env && *env ? env : "runs";
    }
    return root / (c.run.empty() ? fallback : c.run);
}

json resolve(json defaults, const Common& c) {
    if (!c.config_file.empty()) {
        std::ifstream in(c.config_file);
        if (!in) throw ConfigError("cannot read config file " + c.config_file);
        json user = json::parse(in, nullptr, false);
        if (user.is_discarded()) throw ConfigError("config file is not valid JSON: " + c.config_file);
        merge_strict(defaults, user);
    }
    for (const auto& o : c.overrides) apply_override(defaults, o);
    return defaults;
}

void write_snapshot(const fs::path& dir, const std::string& command, const json& effective) {
    fs::create_directories(dir);
    std::ofstream out(dir / "config.json");
    out << json{{"command", command}, {"config", effective}}.dump(2) << '\n';
    if (!out) throw IoError("cannot write config snapshot in " + dir.string());
}

template <typename T>
T get(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for " + key + ": " + e.what());
    }
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stoi(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError("expected a comma-separated integer list, got '" + text + "'");
        }
    }
    return out;
}

// --- corpus config ------------------------------------------------------------------

json corpus_defaults() {
    const SynthConfig s;
    return {{"pages", 10},
            {"seed", 0},
            {"min_words", 10},
            {"max_words", 40},
            {"write_images", true},
            {"page",
             {{"width", s.width},
              {"height", s.height},
              {"kv_pairs", s.kv_pairs},
              {"margin", s.margin},
              {"header_height", s.header_height},
              {"line_pitch", s.line_pitch},
              {"number_rate", s.number_rate}}},
            {"vqa", {{"max_word_after", 3}, {"include_key_value", true}, {"include_line", true}}}};
}

CorpusConfig corpus_config(const json& j) {
    CorpusConfig c;
    c.pages = get<int>(j, "pages");
    c.min_words = get<int>(j, "min_words");
    c.max_words = get<int>(j, "max_words");
    const json& p = j.at("page");
    c.page.width = get<int>(p, "width");
    c.page.height = get<int>(p, "height");
    c.page.kv_pairs = get<int>(p, "kv_pairs");
    c.page.margin = get<int>(p, "margin");
    c.page.header_height = get<int>(p, "header_height");
    c.page.line_pitch = get<int>(p, "line_pitch");
    c.page.number_rate = get<double>(p, "number_rate");
    return c;
}

VqaConfig vqa_config(const json& j) {
    VqaConfig v;
    v.max_word_after = get<int>(j, "max_word_after");
    v.include_key_value = get<bool>(j, "include_key_value");
    v.include_line = get<bool>(j, "include_line");
    return v;
}

VqaCorpus load_vqa_corpus(const fs::path& dir) {
    VqaCorpus c;
    for (auto& e : read_corpus(dir)) {
        c.triples.insert(c.triples.end(), e.triples.begin(), e.triples.end());
        c.pages.push_back(std::move(e.page));
    }
    return c;
}

Checkpoint load_source(const std::string& dir) {
    if (dir.empty()) throw MissingCheckpoint("no checkpoint given");
    if (!fs::exists(fs::path(dir) / "manifest.json")) throw MissingCheckpoint("no checkpoint at " + dir);
    return load_checkpoint(dir);
}

// --- synth ----------------------------------------------------------------------------

int cmd_synth(const Common& common, const json& flags) {
    json cfg = resolve(corpus_defaults(), common);
    merge_strict(cfg, flags);
    const fs::path dir = run_dir(common, "synth");
    write_snapshot(dir, "synth", cfg);

    const VqaCorpus corpus = make_vqa_corpus(corpus_config(cfg), get<std::uint64_t>(cfg, "seed"), vqa_config(cfg.at("vqa")));
    std::vector<CorpusEntry> entries;
    std::map<int, int> histogram;
    for (const auto& page : corpus.pages) {
        CorpusEntry e;
        e.page = page;
        for (const auto& t : corpus.triples)
            if (t.page_id == page.page_id) e.triples.push_back(t);
        ++histogram[static_cast<int>(page.words.size()) / 20 * 20];
        entries.push_back(std::move(e));
    }
    write_corpus(dir, entries, get<bool>(cfg, "write_images"));
    std::cout << "pages: " << corpus.pages.size() << "  questions: " << corpus.triples.size() << '\n';
    for (const auto& [bin, n] : histogram) std::cout << "  words " << bin << "-" << bin + 19 << ": " << n << '\n';
    std::cout << "wrote " << (dir / "manifest.jsonl").string() << '\n';
    return ok;
}

// --- train ----------------------------------------------------------------------------

int cmd_train(const Common& common, const json& flags, const std::string& corpus_dir, const std::string& init) {
    TrainPlan plan_defaults;
    json defaults = {{"plan", plan_defaults}, {"model", ModelConfig{}}};
    json cfg = resolve(defaults, common);
    merge_strict(cfg, flags);

    TrainPlan plan;
    from_json(cfg.at("plan"), plan);
    plan.validate();
    const fs::path dir = run_dir(common, "train_" + to_string(plan.stage));
    if (corpus_dir.empty()) throw ConfigError("--corpus is required");

    TrainResult result;
    std::ofstream log;
    TrainHooks hooks;
    hooks.on_step = [&](const StepRecord& r) {
        log << to_json(r).dump() << '\n';
        if (r.step % 50 == 0 || r.step == plan.steps)
            std::cout << to_string(r.stage) << " step " << r.step << " loss " << r.loss << " lr " << r.lr << '\n';
    };

    switch (plan.stage) {
    case Stage::LtR: {
        ModelConfig model;
        try {
            cfg.at("model").get_to(model);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("bad model config: ") + e.what());
        }
        model.encoder.mode = MergeMode::Plain;
        model.encoder.vilma_stages.clear();
        cfg["model"] = model;
        write_snapshot(dir, "train", cfg);
        log.open(dir / "steps.jsonl");
        result = run_ltr(plan, model, load_vqa_corpus(corpus_dir).pages, hooks);
        break;
    }
    case Stage::Lmpm: {
        if (init.empty()) throw StageError("lmpm needs an ltr checkpoint (--init)");
        Checkpoint source = load_source(init);
        write_snapshot(dir, "train", cfg);
        log.open(dir / "steps.jsonl");
        result = run_lmpm(plan, std::move(source), load_vqa_corpus(corpus_dir).pages, hooks);
        break;
    }
    case Stage::FineTune: {
        if (init.empty())
            throw StageError("finetune needs an " + std::string(plan.arm == Arm::Vilma ? "lmpm" : "ltr") +
                             " checkpoint (--init)");
        Checkpoint source = load_source(init);
        write_snapshot(dir, "train", cfg);
        log.open(dir / "steps.jsonl");
        result = run_finetune(plan, std::move(source), load_vqa_corpus(corpus_dir), hooks);
        break;
    }
    }
    save_checkpoint(dir / "checkpoint", result.checkpoint);
    std::cout << "checkpoint: " << (dir / "checkpoint").string() << '\n';
    return ok;
}

// --- eval -----------------------------------------------------------------------------

int cmd_eval(const Common& common, const json& flags, const std::string& checkpoint, const std::string& corpus_dir,
             int dump_attn) {
    json defaults = {{"metric", "anls"},
                     {"task", "vqa"},
                     {"density_thresholds", json::array()},
                     {"max_len", 16},
                     {"anls_threshold", 0.5},
                     {"relaxed_tolerance", 0.05}};
    json cfg = resolve(defaults, common);
    merge_strict(cfg, flags);
    const Metric metric = metric_from_string(get<std::string>(cfg, "metric"));
    const auto task = get<std::string>(cfg, "task");
    if (task != "vqa" && task != "relaxed-kv") throw ConfigError("unknown task: " + task);
    const auto thresholds = get<std::vector<int>>(cfg, "density_thresholds");
    const MetricOptions opt{get<double>(cfg, "anls_threshold"), get<double>(cfg, "relaxed_tolerance")};
    const int max_len = get<int>(cfg, "max_len");
    if (corpus_dir.empty()) throw ConfigError("--corpus is required");

    Checkpoint ckpt = load_source(checkpoint);
    const Arm arm = ckpt.meta.arm;
    const Model model = std::move(ckpt).to_model();
    const fs::path dir = run_dir(common, "eval");
    cfg["checkpoint"] = checkpoint;
    cfg["corpus"] = corpus_dir;
    write_snapshot(dir, "eval", cfg);
    const VqaCorpus corpus = load_vqa_corpus(corpus_dir);

    std::vector<PredictionRecord> records;
    EvalReport report;
    if (task == "relaxed-kv") {
        records = relaxed_kv_predictions(corpus.pages, [&](const DocumentImage& page, const std::string& q) {
            return model.answer(arm_view(arm, page, q), q, true, max_len);
        });
        report.metric = to_string(Metric::Anls);
        report.n = records.size();
        report.score = records.empty() ? 0.0 : anls(records, opt);
    } else {
        records = predict_vqa(model, arm, corpus, max_len);
        report = density_eval(records, thresholds, metric, opt);
    }
    write_predictions(dir / "predictions.jsonl", records);
    std::ofstream(dir / "report.json") << report.to_json().dump(2) << '\n';
    std::cout << report.table();

    if (dump_attn > 0) {
        if (model.config().encoder.mode != MergeMode::Vilma)
            throw ConfigError("--dump-attn needs a prompt-conditioned checkpoint");
        int dumped = 0;
        for (const auto& t : corpus.triples) {
            if (dumped == dump_attn) break;
            const DocumentImage& page = corpus.page(t.page_id);
            for (const auto& rec : model.capture_attention(page, model.vocab().tokenize(t.question)))
                dump_attention(dir / "attention" / std::to_string(dumped), rec, page);
            ++dumped;
        }
        std::cout << "attention maps: " << (dir / "attention").string() << '\n';
    }
    return ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Prompt-conditioned document understanding: synthesis, training, evaluation"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--out", common.out, "Output root (default $PROMPTMERGE_OUT or ./runs)");
    app.add_option("--run", common.run, "Run directory name under the output root");
    app.add_option("--config", common.config_file, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--set", common.overrides, "Override a config key: key.path=value");

    json flags = json::object();

    auto* synth = app.add_subcommand("synth", "Generate a synthetic page corpus with questions");
    int pages = -1, min_words = -1, max_words = -1;
    long long synth_seed = -1;
    bool no_images = false;
    synth->add_option("--pages", pages, "Number of pages")->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", synth_seed, "Corpus seed")->check(CLI::NonNegativeNumber);
    synth->add_option("--min-words", min_words)->check(CLI::NonNegativeNumber);
    synth->add_option("--max-words", max_words)->check(CLI::NonNegativeNumber);
    synth->add_flag("--no-images", no_images, "Write the manifest only");

    auto* train = app.add_subcommand("train", "Run one training stage");
    std::string stage, arm, vilma_stages, corpus_dir, init;
    double rho = -1.0, lr = -1.0;
    int steps = -1, batch = -1, warmup = -1;
    long long train_seed = -1;
    train->add_option("--stage", stage, "ltr, lmpm or finetune")
        ->required()
        ->check(CLI::IsMember({"ltr", "lmpm", "finetune"}));
    train->add_option("--arm", arm, "baseline, render or vilma")->check(CLI::IsMember({"baseline", "render", "vilma"}));
    train->add_option("--vilma-stages", vilma_stages, "Comma-separated prompt-site stages, e.g. 3,4");
    train->add_option("--rho", rho, "Prompt inclusion probability during lmpm")->check(CLI::Range(0.0, 1.0));
    train->add_option("--steps", steps)->check(CLI::PositiveNumber);
    train->add_option("--batch-size", batch)->check(CLI::PositiveNumber);
    train->add_option("--lr", lr)->check(CLI::PositiveNumber);
    train->add_option("--warmup", warmup)->check(CLI::NonNegativeNumber);
    train->add_option("--seed", train_seed)->check(CLI::NonNegativeNumber);
    train->add_option("--corpus", corpus_dir, "Corpus directory written by synth");
    train->add_option("--init", init, "Source checkpoint directory");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a corpus");
    std::string checkpoint, metric, thresholds, task;
    std::string eval_corpus;
    int dump_attn = 0, max_len = -1;
    eval->add_option("--checkpoint", checkpoint, "Checkpoint directory");
    eval->add_option("--corpus", eval_corpus, "Corpus directory written by synth");
    eval->add_option("--metric", metric, "anls, ra or em")->check(CLI::IsMember({"anls", "ra", "em"}));
    eval->add_option("--density-thresholds", thresholds, "Comma-separated minimum word counts");
    eval->add_option("--task", task, "vqa or relaxed-kv")->check(CLI::IsMember({"vqa", "relaxed-kv"}));
    eval->add_option("--max-len", max_len)->check(CLI::PositiveNumber);
    eval->add_option("--dump-attn", dump_attn, "Write attention maps for the first N questions")
        ->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (synth->parsed()) {
            if (pages >= 0) flags["pages"] = pages;
            if (synth_seed >= 0) flags["seed"] = synth_seed;
            if (min_words >= 0) flags["min_words"] = min_words;
            if (max_words >= 0) flags["max_words"] = max_words;
            if (no_images) flags["write_images"] = false;
            return cmd_synth(common, flags);
        }
        if (train->parsed()) {
            json plan = {{"stage", stage}};
            if (!arm.empty()) plan["arm"] = arm;
            else plan["arm"] = stage == "lmpm" ? "vilma" : stage == "ltr" ? "baseline" : "vilma";
            if (!vilma_stages.empty()) plan["vilma_stages"] = parse_int_list(vilma_stages);
            if (rho >= 0.0) plan["rho"] = rho;
            if (steps > 0) plan["steps"] = steps;
            if (batch > 0) plan["batch_size"] = batch;
            if (lr > 0.0) plan["base_lr"] = lr;
            if (warmup >= 0) plan["warmup_steps"] = warmup;
            if (train_seed >= 0) plan["seed"] = train_seed;
            flags["plan"] = plan;
            return cmd_train(common, flags, corpus_dir, init);
        }
        if (!metric.empty()) flags["metric"] = metric;
        if (!task.empty()) flags["task"] = task;
        if (!thresholds.empty()) flags["density_thresholds"] = parse_int_list(thresholds);
        if (max_len > 0) flags["max_len"] = max_len;
        return cmd_eval(common, flags, checkpoint, eval_corpus, dump_attn);
    } catch (const MissingCheckpoint& e) {
        std::cerr << "error: " << e.what() << '\n';
        return missing_checkpoint;
    } catch (const StageError& e) {
        std::cerr << "stage error: " << e.what() << '\n';
        return stage_error;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const PreconditionError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return failure;
    }
}
