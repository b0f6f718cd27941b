#include "reldetr/cli.hpp"

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "reldetr/checkpoint.hpp"
#include "reldetr/decoder.hpp"
#include "reldetr/errors.hpp"
#include "reldetr/mcstat.hpp"
#include "reldetr/relenc.hpp"
#include "reldetr/toyexp.hpp"
#include "reldetr/verify/checks.hpp"

namespace reldetr::cli {
namespace {

using nlohmann::json;

const std::map<std::string, decoder::DecoderConfig (*)()> kProfiles = {
    {"toy", &decoder::DecoderConfig::toy},
    {"paper", &decoder::DecoderConfig::paper},
    {"gradcheck", &decoder::DecoderConfig::gradcheck},
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path);
    f << text;
    if (!f) throw InputError("failed writing " + path);
}

json read_json(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot open " + path);
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw InputError(path + ": invalid JSON at byte " + std::to_string(e.byte));
    }
}

json nested(const nk::Tensor& t) {
    const auto& shape = t.shape();
    const auto v = t.values();
    json out = json::array();
    const std::size_t inner = shape.back();
    const std::size_t mid = shape.size() == 3 ? shape[1] : 1;
    for (std::size_t i = 0; i < shape[0]; ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < mid; ++j) {
            const auto base = (i * mid + j) * inner;
            json cell(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(base),
                                          v.begin() + static_cast<std::ptrdiff_t>(base + inner)));
            if (shape.size() == 3) {
                row.push_back(std::move(cell));
            } else {
                row = std::move(cell);
            }
        }
        out.push_back(std::move(row));
    }
    return out;
}

std::vector<geom::Box> parse_boxes(const json& doc, const std::string& source) {
    if (!doc.is_array() || doc.empty()) throw InputError(source + ": expected a non-empty array of [x, y, w, h]");
    std::vector<geom::Box> boxes;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& b = doc[i];
        const auto where = source + " at /" + std::to_string(i);
        if (!b.is_array() || b.size() != 4) throw InputError(where + ": expected [x, y, w, h]");
        std::array<double, 4> v{};
        for (std::size_t k = 0; k < 4; ++k) {
            if (!b[k].is_number()) throw InputError(where + "/" + std::to_string(k) + ": expected a number");
            v[k] = b[k].get<double>();
        }
        auto box = geom::Box::try_make(v[0], v[1], v[2], v[3]);
        if (!box) throw InputError(where + ": box needs finite values and w, h > 0");
        boxes.push_back(*box);
    }
    return boxes;
}

struct McArgs {
    std::string annotations;
    std::size_t bins = 20;
    std::string out_csv;
    std::string out_summary;
    std::size_t jobs = 1;
};

int cmd_mc(const McArgs& a, std::ostream& out) {
    const auto result = mcstat::dataset_mc(mcstat::load_coco(a.annotations), {a.bins, a.jobs});
    if (!a.out_csv.empty()) write_text(a.out_csv, mcstat::records_csv(result.records));
    if (!a.out_summary.empty()) write_text(a.out_summary, mcstat::summary_json(result.summary).dump(2) + "\n");
    const auto& s = result.summary;
    if (!s.has_data) {
        out << "no data (" << s.n_images << " images, " << s.n_skipped << " skipped)\n";
        return ok;
    }
    out << "mean " << mcstat::format_double(s.mean) << "\n"
        << "median " << mcstat::format_double(s.median) << "\n"
        << "images " << s.n_records << " of " << s.n_images << " (" << s.n_skipped << " skipped)\n";
    return ok;
}

struct EncodeArgs {
    std::string boxes;
    std::string profile = "paper";
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_encode(const EncodeArgs& a, std::ostream& out) {
    const auto cfg = kProfiles.at(a.profile)().relation;
    const auto boxes = parse_boxes(read_json(a.boxes), a.boxes);
    nk::ParameterSet params;
    const auto head = relenc::init_relation_head(params, "relation", cfg, Rng(a.seed).split("relation"));
    const auto features = geom::relation_matrix(boxes, boxes);
    const auto embed = relenc::sincos_embed(features, cfg);
    const auto bias = relenc::relation_head(embed, head, cfg);
    json doc = {
        {"profile", a.profile},
        {"seed", a.seed},
        {"num_boxes", boxes.size()},
        {"features", nested(features.values)},
        {"features_shape", features.values.shape()},
        {"embedding_shape", embed.shape()},
        {"bias", nested(bias.values)},
        {"bias_shape", bias.values.shape()},
        {"metadata",
         {{"epsilon", cfg.epsilon},
          {"note", "every bias entry is max(epsilon, W * embedding + B)"},
          {"temperature", cfg.temperature},
          {"embed_dim", cfg.embed_dim},
          {"scale", cfg.scale},
          {"heads", cfg.heads}}},
    };
    const auto text = doc.dump(2) + "\n";
    if (a.out.empty()) {
        out << text;
    } else {
        write_text(a.out, text);
    }
    return ok;
}

struct ToyArgs {
    std::string variant = "relation+contrast";
    std::size_t steps = 200;
    std::uint64_t seed = 7;
    std::string profile = "toy";
    std::string out;
    std::string config;
    std::string checkpoint;
    bool timing = false;
};

int cmd_toy(const ToyArgs& a, std::ostream& out, std::ostream& err) {
    toyexp::TrainConfig cfg;
    cfg.model = kProfiles.at(a.profile)();
    if (!a.config.empty()) cfg = toyexp::merge_config(cfg, read_json(a.config));
    const auto variant = toyexp::parse_variant(a.variant);
    nk::ParameterSet trained;
    const auto report = toyexp::run_experiment(variant, a.steps, a.seed, cfg, &trained);
    if (!a.checkpoint.empty()) decoder::save_checkpoint(trained, a.checkpoint);
    const auto text = toyexp::to_json(report, a.timing).dump(2) + "\n";
    if (a.out.empty()) {
        out << text;
    } else {
        write_text(a.out, text);
        out << "variant " << toyexp::to_string(variant) << " steps " << report.losses.size() << " L_m "
            << mcstat::format_double(report.losses.front().total) << " -> "
            << mcstat::format_double(report.losses.back().total) << " toy_ap "
            << mcstat::format_double(report.toy_ap) << "\n";
    }
    for (const auto& w : report.warnings) err << "warning: " << w << "\n";
    if (report.diverged) {
        err << "diverged at step " << report.losses.back().step << "\n";
        return numeric_failure;
    }
    return ok;
}

int cmd_verify(const std::string& suite, std::ostream& out) {
    const auto results = verify::run_suite(suite);
    bool all = true;
    for (const auto& r : results) {
        out << verify::format_result(r) << "\n";
        all = all && r.passed;
    }
    out << (all ? "all " : "some ") << results.size() << " checks " << (all ? "passed" : "failed") << "\n";
    return all ? ok : failed_check;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Relation-biased detection decoder toolkit", "reldetr"};
    app.require_subcommand(1);

    McArgs mc;
    auto* mc_cmd = app.add_subcommand("mc", "Macroscopic correlation statistics of COCO annotations");
    mc_cmd->add_option("annotations", mc.annotations, "COCO-format JSON file")->required();
    mc_cmd->add_option("--bins", mc.bins, "Histogram bins")->check(CLI::PositiveNumber);
    mc_cmd->add_option("--out-csv", mc.out_csv, "Per-image CSV output");
    mc_cmd->add_option("--out-summary", mc.out_summary, "Summary JSON output");
    mc_cmd->add_option("--jobs", mc.jobs, "Worker threads (0 = all cores)");

    EncodeArgs enc;
    auto* enc_cmd = app.add_subcommand("encode", "Relation features, embedding and bias for a box list");
    enc_cmd->add_option("boxes", enc.boxes, "JSON array of [x, y, w, h]")->required();
    enc_cmd->add_option("--profile", enc.profile)->check(CLI::IsMember({"paper", "toy", "gradcheck"}));
    enc_cmd->add_option("--seed", enc.seed, "Seed for the relation head parameters");
    enc_cmd->add_option("--out", enc.out, "Output file (default: standard output)");

    ToyArgs toy;
    auto* toy_cmd = app.add_subcommand("toy", "Train the toy detector and report losses");
    toy_cmd->add_option("--variant", toy.variant)
        ->check(CLI::IsMember({"baseline", "relation", "relation+contrast"}));
    toy_cmd->add_option("--steps", toy.steps)->check(CLI::PositiveNumber);
    toy_cmd->add_option("--seed", toy.seed);
    toy_cmd->add_option("--profile", toy.profile)->check(CLI::IsMember({"toy", "paper", "gradcheck"}));
    toy_cmd->add_option("--out", toy.out, "Report file (default: standard output)");
    toy_cmd->add_option("--config", toy.config, "Flat JSON object overriding config keys");
    toy_cmd->add_option("--checkpoint", toy.checkpoint, "Write trained parameters here");
    toy_cmd->add_flag("--timing", toy.timing, "Include wall_ms in the report");

    std::string suite = "all";
    auto* verify_cmd = app.add_subcommand("verify", "Run the built-in property suites");
    verify_cmd->add_option("--suite", suite)->check(CLI::IsMember({"gradcheck", "hungarian", "invariants", "all"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        if (code == 0) return ok;
        const CLI::App* scope = &app;
        for (const auto* sub : {mc_cmd, enc_cmd, toy_cmd, verify_cmd}) {
            if (sub->parsed()) scope = sub;
        }
        err << scope->help();
        return usage_error;
    }

    try {
        if (*mc_cmd) return cmd_mc(mc, out);
        if (*enc_cmd) return cmd_encode(enc, out);
        if (*toy_cmd) return cmd_toy(toy, out, err);
        return cmd_verify(suite, out);
    } catch (const InputError& e) {
        err << "error: " << e.what() << "\n";
        return usage_error;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << "\n";
        return usage_error;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << "\n";
        return numeric_failure;
    }
}

}  // namespace reldetr::cli
