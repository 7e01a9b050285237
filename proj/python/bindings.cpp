#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mgeo/bridge.hpp"
#include "mgeo/cli.hpp"
#include "mgeo/harness.hpp"

namespace py = pybind11;
using namespace mgeo;

namespace {

Image image_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 3) throw DomainError("image array must be HxWxC");
    Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)));
    std::copy(a.data(), a.data() + a.size(), img.data.begin());
    return img;
}

py::array_t<double> image_to_array(const Image& img) {
    py::array_t<double> a({img.height, img.width, img.channels});
    std::copy(img.data.begin(), img.data.end(), a.mutable_data());
    return a;
}

// Owns a toy model built from a catalog file; setups borrow from it.
class ToyRanker {
public:
    ToyRanker(const std::string& catalog, const RankerConfig& config, const std::vector<std::string>& banned)
        : model_(ToyModel::build(load_catalog(catalog), config, banned)) {}

    std::vector<std::string> ranking() const {
        std::vector<std::string> ids;
        for (std::size_t i : model_.pre_ranking.permutation) ids.push_back(model_.catalog.products[i].id);
        return ids;
    }
    std::vector<double> scores() const { return model_.pre_ranking.scores; }
    std::vector<std::string> ids() const {
        std::vector<std::string> out;
        for (const auto& p : model_.catalog.products) out.push_back(p.id);
        return out;
    }
    std::string category() const { return model_.catalog.category; }
    std::size_t vocab_size() const { return model_.vocab.size(); }

    std::size_t index(const std::string& id) const {
        const auto i = model_.catalog.find(id);
        if (!i) throw DomainError("no product with id \"" + id + "\"");
        return *i;
    }

    py::tuple attack(const std::string& target, const std::string& kind, const std::string& config_json) const {
        const JointConfig config = joint_config_from_json(nlohmann::json::parse(config_json));
        AttackReport r;
        {
            py::gil_scoped_release release;
            r = run_attack(make_toy_setup(model_, index(target)), parse_attack_kind(kind), config);
        }
        return py::make_tuple(to_json(r).dump(), image_to_array(r.adversarial_image));
    }

    std::string sweep(const std::string& kind, const std::string& config_json, std::uint64_t base_seed,
                      int workers) const {
        const JointConfig config = joint_config_from_json(nlohmann::json::parse(config_json));
        py::gil_scoped_release release;
        return to_json(leave_one_out(toy_subject(model_), parse_attack_kind(kind), config, SweepOptions{base_seed, workers}))
            .dump();
    }

    py::array_t<double> image(const std::string& id) const { return image_to_array(model_.catalog.products[index(id)].image); }

private:
    ToyModel model_;
};

}  // namespace

PYBIND11_MODULE(_mgeo, m) {
    m.doc() = "Joint text and image ranking attacks on a toy multimodal ranker";

    // Translators run newest first, so the base class goes first.
    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<AbortError>(m, "AbortError", PyExc_RuntimeError);
    py::register_exception<BridgeError>(m, "BridgeError", PyExc_RuntimeError);

    py::class_<RankerConfig>(m, "RankerConfig")
        .def(py::init<>())
        .def_readwrite("seed", &RankerConfig::seed)
        .def_readwrite("embed_dim", &RankerConfig::embed_dim)
        .def_readwrite("patch_size", &RankerConfig::patch_size)
        .def_readwrite("resolution", &RankerConfig::resolution)
        .def_readwrite("text_weight", &RankerConfig::text_weight)
        .def_readwrite("image_weight", &RankerConfig::image_weight)
        .def_readwrite("interaction_weight", &RankerConfig::interaction_weight)
        .def_readwrite("temperature", &RankerConfig::temperature);

    py::class_<ToyRanker>(m, "ToyRanker")
        .def(py::init<const std::string&, const RankerConfig&, const std::vector<std::string>&>(), py::arg("catalog"),
             py::arg("config") = RankerConfig{}, py::arg("banned") = default_banned_phrases())
        .def_property_readonly("category", &ToyRanker::category)
        .def_property_readonly("ids", &ToyRanker::ids)
        .def_property_readonly("vocab_size", &ToyRanker::vocab_size)
        .def("ranking", &ToyRanker::ranking, "Product ids, best first")
        .def("scores", &ToyRanker::scores, "Scores in catalog order")
        .def("image", &ToyRanker::image, py::arg("id"), "Listing image at ranker resolution")
        .def("_attack", &ToyRanker::attack)
        .def("_sweep", &ToyRanker::sweep);

    m.def("default_joint_config", [] { return to_json(JointConfig{}).dump(); });
    m.def("plackett_luce_nll",
          [](const std::vector<double>& scores, const std::vector<std::size_t>& permutation, double temperature) {
              return plackett_luce_nll(scores, permutation, temperature);
          },
          py::arg("scores"), py::arg("permutation"), py::arg("temperature") = 0.25);
    m.def("rank_change", &rank_change, py::arg("pre"), py::arg("post"), py::arg("n"));
    m.def("derive_seed", &derive_seed, py::arg("base_seed"), py::arg("target_id"));
    m.def("smoothness_loss", [](const py::array_t<double>& d) { return smoothness_loss(image_from_array(d)); });
    m.def("magnitude_loss",
          [](const py::array_t<double>& d, const py::array_t<double>& mask, double fg, double bg) {
              return magnitude_loss(image_from_array(d), image_from_array(mask), fg, bg);
          },
          py::arg("delta"), py::arg("mask"), py::arg("foreground_weight"), py::arg("background_weight"));
    m.def("render_prompt", [](const std::string& catalog) { return render_prompt(load_catalog(catalog)); });
    m.def("parse_ranking", [](const std::string& text, const std::string& catalog) {
        return parse_ranking(text, load_catalog(catalog));
    });
    m.def("run_cli", [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
            py::gil_scoped_release release;
            code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
    });
}
