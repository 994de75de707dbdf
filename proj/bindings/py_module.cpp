// Python bindings. Structured values cross the boundary as JSON strings;
// the cupcur package wraps them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "cupcur/curriculum.hpp"
#include "cupcur/experiment.hpp"
#include "cupcur/serialize.hpp"
#include "cupcur/stats.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace cupcur;

namespace {

ExperimentSpec spec_from_json_str(const std::string& spec_json) {
    return ExperimentSpec::from_json(json::parse(spec_json));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "cup-curriculum core: pruning/growth training, baselines, rank-sum stats";

    py::class_<ExperimentRunner>(m, "ExperimentRunner")
        .def(py::init([](const std::string& spec_json) {
                 return std::make_unique<ExperimentRunner>(spec_from_json_str(spec_json));
             }),
             py::arg("spec_json"))
        .def_property_readonly("vocab_size",
                               [](const ExperimentRunner& r) { return r.dataset().vocab.size(); })
        .def_property_readonly("resolved_spec_json",
                               [](const ExperimentRunner& r) { return r.spec().to_json_resolved().dump(); })
        .def(
            "run_cup",
            [](ExperimentRunner& r, std::uint64_t seed, const std::string& strategy) {
                return json(r.run_cup(seed, Strategy::parse(strategy))).dump();
            },
            py::arg("seed"), py::arg("strategy") = "best:random:identical")
        .def("run_early_stopping_baseline",
             [](ExperimentRunner& r) { return json(r.run_early_stopping_baseline()).dump(); })
        .def("run_imp_baseline", [](ExperimentRunner& r) { return json(r.run_imp_baseline()).dump(); })
        .def(
            "run_strategy_grid",
            [](ExperimentRunner& r, const std::vector<std::string>& strategies, int parallel) {
                std::vector<Strategy> parsed;
                parsed.reserve(strategies.size());
                for (const auto& s : strategies) parsed.push_back(Strategy::parse(s));
                return json(r.run_strategy_grid(parsed, parallel)).dump();
            },
            py::arg("strategies"), py::arg("parallel") = 1);

    m.def("default_spec_json", [] { return ExperimentSpec{}.to_json_resolved().dump(); });

    m.def(
        "wmw_test",
        [](const std::vector<double>& xs, const std::vector<double>& ys, const std::string& alternative,
           double alpha) {
            const auto r = wmw_test(xs, ys, parse_alternative(alternative), alpha);
            return json{{"u_statistic", r.u_statistic},
                        {"p_value", r.p_value},
                        {"method", r.method},
                        {"alpha", r.alpha},
                        {"significant", r.significant}}
                .dump();
        },
        py::arg("xs"), py::arg("ys"), py::arg("alternative") = "two-sided", py::arg("alpha") = 0.01);

    m.def("relative_performance", &relative_performance, py::arg("candidate_loss"),
          py::arg("baseline_loss"));
    m.def("perplexity", &perplexity, py::arg("loss"));
    m.def(
        "update_scale",
        [](int age, int step, const std::string& scheme, double f) {
            return update_scale(age, step, parse_update_scheme(scheme), f);
        },
        py::arg("age"), py::arg("current_step"), py::arg("scheme"), py::arg("f") = 0.5);

    m.def(
        "build_report",
        [](const std::string& out_dir, double alpha) { return json(build_report(out_dir, alpha)).dump(); },
        py::arg("out_dir"), py::arg("alpha") = 0.01);
    m.def("emit_plot_data", &emit_plot_data, py::arg("out_dir"), py::arg("csv_path"));
}
