// SPDX-License-Identifier: Apache-2.0
// Python bindings for extraction, statistics and the command line.
#include "coder_consensus/cli.hpp"
#include "coder_consensus/errors.hpp"
#include "coder_consensus/extraction.hpp"
#include "coder_consensus/metrics.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace coder_consensus;

namespace {

Codebook codebook_from(const std::optional<std::filesystem::path>& path) {
    return path ? load_codebook(*path) : builtin_codebook();
}

py::dict extraction_dict(const Codebook& cb, const ExtractionResult& r) {
    py::dict values;
    for (std::size_t i = 0; i < cb.size(); ++i) {
        auto v = r.assignment.values[i];
        values[py::str(cb[i].name)] = v == CodeValue::missing ? py::object(py::none()) : py::int_(v == CodeValue::present);
    }
    py::dict out;
    out["values"] = values;
    out["status"] = std::string(to_string(r.parse_status));
    out["missing"] = r.missing_labels;
    out["extraneous"] = r.extraneous_labels;
    out["malformed"] = r.malformed_labels;
    out["conflicting"] = r.conflicting_labels;
    out["duplicate_keys"] = r.duplicate_keys;
    out["complete"] = r.complete();
    return out;
}

py::tuple run_cli(const std::vector<std::string>& args) {
    std::vector<std::string> full{"coder-consensus"};
    full.insert(full.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : full) argv.push_back(a.c_str());
    std::ostringstream out, err;
    int code;
    {
        py::gil_scoped_release release;
        code = cli::run_main(static_cast<int>(argv.size()), argv.data(), out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Multi-agent qualitative coding: extraction, statistics and the experiment CLI";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<IntegrityError>(m, "IntegrityError", base.ptr());
    py::register_exception<TransportError>(m, "TransportError", base.ptr());

    m.def("codebook_names", [](std::optional<std::filesystem::path> path) { return codebook_from(path).names(); },
          py::arg("codebook") = py::none(), "Category names in codebook order.");
    m.def("normalize_label", [](const std::string& s) { return normalize_label(s); });
    m.def(
        "extract_codes",
        [](const std::string& text, std::optional<std::filesystem::path> codebook,
           std::optional<std::filesystem::path> alias_file) {
            auto cb = codebook_from(codebook);
            LabelResolver resolver(cb, alias_file ? load_alias_file(*alias_file) : default_aliases());
            return extraction_dict(cb, extract_codes(text, cb, resolver));
        },
        py::arg("text"), py::arg("codebook") = py::none(), py::arg("alias_file") = py::none(),
        "Parse the last code dictionary in a completion. Missing categories map to None.");

    m.def("bh_adjust", [](const std::vector<double>& p) { return bh_adjust(p); }, py::arg("p_values"));
    m.def(
        "binomial_ci",
        [](std::size_t agree, std::size_t n, double level) {
            auto ci = binomial_ci(agree, n, level);
            return py::make_tuple(ci.low, ci.high);
        },
        py::arg("agree"), py::arg("n"), py::arg("level") = 0.95, "Wilson score interval.");
    m.def(
        "wald_ci",
        [](std::size_t agree, std::size_t n, double level) {
            auto ci = wald_ci(agree, n, level);
            return py::make_tuple(ci.low, ci.high);
        },
        py::arg("agree"), py::arg("n"), py::arg("level") = 0.95);
    m.def(
        "cohens_kappa",
        [](const std::vector<int>& a, const std::vector<int>& b) {
            auto k = cohens_kappa(a, b);
            py::dict out;
            out["kappa"] = k.kappa;
            out["observed_agreement"] = k.observed_agreement;
            out["expected_agreement"] = k.expected_agreement;
            out["n"] = k.n;
            out["degenerate"] = k.degenerate;
            out["substantial"] = k.substantial;
            return out;
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "paired_t",
        [](const std::vector<double>& consensus, const std::vector<double>& single) {
            if (consensus.size() != single.size()) throw ValidationError("paired samples differ in length");
            std::vector<PairedSample> pairs;
            for (std::size_t i = 0; i < consensus.size(); ++i) pairs.push_back({consensus[i], single[i]});
            auto r = paired_t(pairs);
            py::dict out;
            out["n"] = r.n;
            out["mean_diff"] = r.mean_diff;
            out["t_statistic"] = r.t_statistic;
            out["df"] = r.df;
            out["p_value"] = r.p_raw;
            out["direction"] = std::string(to_string(r.direction));
            out["degenerate"] = r.degenerate;
            out["testable"] = r.testable;
            return out;
        },
        py::arg("consensus"), py::arg("single"));

    m.def("run_cli", &run_cli, py::arg("args"),
          "Run the command line in-process. Returns (exit_code, stdout, stderr).");
}
