// Command-line driver: prepare -> embed -> train -> eval -> report, plus
// gradcheck.

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wrnn/commands.hpp"

namespace {

int run(int argc, char** argv) {
    CLI::App app{"W-RNN text classification toolkit"};
    app.fallthrough();
    app.require_subcommand(1);

    std::string config_path;
    wrnn::KeyValues flags;
    app.add_option("--config", config_path, "flat key = value config file");
    for (const auto& field : wrnn::config_fields()) {
        std::string names = "--" + field.key;
        if (field.key.find('_') != std::string::npos) {
            std::string dashed = field.key;
            for (char& c : dashed)
                if (c == '_') c = '-';
            names += ",--" + dashed;
        }
        const std::string key = field.key;
        if (field.is_flag) {
            app.add_flag_callback(names, [&flags, key] { flags[key] = "true"; }, field.help);
        } else {
            app.add_option_function<std::string>(names, [&flags, key](const std::string& v) { flags[key] = v; },
                                                 field.help);
        }
    }

    auto* prepare = app.add_subcommand("prepare", "tokenize, split and encode a category-per-directory dataset");
    auto* embed = app.add_subcommand("embed", "train skip-gram word vectors on the prepared training split");
    auto* train = app.add_subcommand("train", "train the configured classifier");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a prepared split");
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every analytic gradient");
    auto* report = app.add_subcommand("report", "merge metrics files into a comparison table");

    std::string corrupt;
    gradcheck->add_option("--corrupt", corrupt, "negative control: perturb one component's gradient")
        ->group("");  // test hook, hidden from --help
    std::vector<std::string> report_files;
    report->add_option("files", report_files, "metrics.csv files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(wrnn::ExitCode::usage);
    }

    const wrnn::KeyValues file = config_path.empty() ? wrnn::KeyValues{} : wrnn::parse_config_file(config_path);
    const wrnn::ExperimentConfig cfg = wrnn::resolve_config(file, flags);

    if (prepare->parsed()) {
        wrnn::run_prepare(cfg);
    } else if (embed->parsed()) {
        wrnn::run_embed(cfg);
    } else if (train->parsed()) {
        wrnn::run_train(cfg);
    } else if (eval->parsed()) {
        wrnn::run_eval(cfg);
    } else if (gradcheck->parsed()) {
        wrnn::GradcheckOptions opts;
        opts.corrupt_component = corrupt;
        if (!wrnn::run_gradcheck_command(opts).passed()) return static_cast<int>(wrnn::ExitCode::numeric);
    } else if (report->parsed()) {
        wrnn::run_report(report_files, cfg);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const wrnn::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return static_cast<int>(wrnn::ExitCode::data);
    }
}
