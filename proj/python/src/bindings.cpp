// _core: thin pybind11 layer over entpick. Configs and reports cross the
// boundary as JSON text; the Python package turns them into dicts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "entpick/dataset.hpp"
#include "entpick/eval.hpp"
#include "entpick/grasp_select.hpp"
#include "entpick/heap_sim.hpp"
#include "entpick/mdn.hpp"
#include "entpick/pipeline.hpp"
#include "entpick/training.hpp"

namespace py = pybind11;
using namespace entpick;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

SimConfig sim_from(const std::string& text) { return text.empty() ? SimConfig{} : sim_config_from_json(json::parse(text)); }
ModelConfig model_cfg_from(const std::string& text) {
    return text.empty() ? ModelConfig{} : model_config_from_json(json::parse(text));
}

Array grid_array(const Grid<double>& g) {
    Array a({g.ny(), g.nx()});
    std::copy(g.data().begin(), g.data().end(), a.mutable_data());
    return a;
}

PatchObservation patch_from(const Array& a, double depth_cm) {
    if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw std::invalid_argument("patch must be a square 2D array");
    PatchObservation p;
    p.side = static_cast<int>(a.shape(0));
    p.heights.assign(a.data(), a.data() + a.size());
    p.insertion_depth_cm = depth_cm;
    return p;
}

Array patch_array(const PatchObservation& p) {
    Array a({p.side, p.side});
    std::copy(p.heights.begin(), p.heights.end(), a.mutable_data());
    return a;
}

std::vector<Sample> batch_from(const std::vector<Array>& patches, const std::vector<double>& depths,
                               const std::vector<double>& masses) {
    if (patches.size() != depths.size() || patches.size() != masses.size())
        throw std::invalid_argument("patches, depths and masses must have equal length");
    std::vector<Sample> out;
    for (std::size_t i = 0; i < patches.size(); ++i) out.push_back({patch_from(patches[i], depths[i]), masses[i], Split::train});
    return out;
}

py::tuple mixture_tuple(const MixtureParams& m) { return py::make_tuple(m.pi, m.mu, m.sigma); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Heap simulator, mixture density mass model, grasp selection and experiment harness";

    py::register_exception<DatasetError>(m, "DatasetError", PyExc_ValueError);

    m.def("default_sim_config", [] { return to_json(SimConfig{}).dump(); });
    m.def("default_model_config", [] { return to_json(ModelConfig{}).dump(); });
    m.def("normalize_sim_config", [](const std::string& t) { return to_json(sim_from(t)).dump(); });

    py::class_<HeapState>(m, "Heap")
        .def(py::init([](const std::string& cfg, std::uint64_t seed) { return init_heap(sim_from(cfg), seed); }),
             py::arg("config") = "", py::arg("seed") = 0)
        .def_property_readonly("nx", &HeapState::nx)
        .def_property_readonly("ny", &HeapState::ny)
        .def_property_readonly("seed", [](const HeapState& h) { return h.seed; })
        .def("total_mass", &total_mass)
        .def("heights", [](const HeapState& h) { return grid_array(h.height_mm); })
        .def("density", [](const HeapState& h) { return grid_array(h.density); })
        .def("entanglement", [](const HeapState& h) { return grid_array(h.entanglement); })
        .def("observe_patch",
             [](const HeapState& h, int x, int y, int side) {
                 const PatchObservation p = observe_patch(h, x, y, side);
                 return py::make_tuple(patch_array(p), p.surface_mm);
             },
             py::arg("x"), py::arg("y"), py::arg("side") = kPatchSide)
        .def("copy", [](const HeapState& h) { return HeapState(h); })
        .def("__eq__", [](const HeapState& a, const HeapState& b) { return a == b; });

    m.def("execute_grasp",
          [](HeapState& heap, const std::string& cfg, int x, int y, double z_cm, std::uint64_t seed) {
              Rng rng = make_rng(seed);
              const GraspOutcome g = execute_grasp(heap, sim_from(cfg), x, y, z_cm, rng);
              return py::dict(py::arg("grasped_g") = g.grasped_mass, py::arg("base_g") = g.base_mass,
                              py::arg("entangled_g") = g.entangled_extra, py::arg("clumps_g") = g.clump_masses);
          },
          py::arg("heap"), py::arg("config"), py::arg("x"), py::arg("y"), py::arg("z_cm"), py::arg("seed"));
    m.def("apply_pregrasp",
          [](HeapState& heap, const std::string& cfg, int x, int y, double z_cm) {
              apply_pregrasp(heap, sim_from(cfg), x, y, z_cm);
          },
          py::arg("heap"), py::arg("config"), py::arg("x"), py::arg("y"), py::arg("z_cm"));

    py::class_<ModelParams>(m, "Model")
        .def_static("init", [](const std::string& cfg) { return init_params(model_cfg_from(cfg)); }, py::arg("config") = "")
        .def_static("zeros", [](const std::string& cfg) { return zero_params(model_cfg_from(cfg)); }, py::arg("config") = "")
        .def_static("load", [](const std::string& path) { return load_checkpoint(path); })
        .def("save", [](const ModelParams& p, const std::string& path) { save_checkpoint(p, {}, path); })
        .def_property_readonly("config", [](const ModelParams& p) { return to_json(p.config).dump(); })
        .def_property("theta", [](const ModelParams& p) { return p.theta; },
                      [](ModelParams& p, std::vector<double> t) {
                          if (t.size() != p.theta.size()) throw std::invalid_argument("theta length mismatch");
                          p.theta = std::move(t);
                      })
        .def("forward", [](const ModelParams& p, const Array& patch, double z_cm) {
            return mixture_tuple(mdn_forward(p, patch_from(patch, z_cm)));
        })
        .def("estimate", [](const ModelParams& p, const Array& patch, double z_cm) {
            const MassEstimate e = reduce(mdn_forward(p, patch_from(patch, z_cm)), p.config.reduction);
            return py::make_tuple(e.mu, e.sigma);
        })
        .def("nll", [](const ModelParams& p, const std::vector<Array>& patches, const std::vector<double>& depths,
                       const std::vector<double>& masses) { return nll_loss(p, batch_from(patches, depths, masses)); })
        .def("nll_grad", [](const ModelParams& p, const std::vector<Array>& patches, const std::vector<double>& depths,
                            const std::vector<double>& masses) { return nll_grad(p, batch_from(patches, depths, masses)); });

    m.def("mixture_pdf", [](std::vector<double> pi, std::vector<double> mu, std::vector<double> sigma, double x) {
        return mdn_pdf(MixtureParams{std::move(pi), std::move(mu), std::move(sigma)}, x);
    });
    m.def("mixture_moments", [](std::vector<double> pi, std::vector<double> mu, std::vector<double> sigma) {
        const MassEstimate e = mixture_moments(MixtureParams{std::move(pi), std::move(mu), std::move(sigma)});
        return py::make_tuple(e.mu, e.sigma);
    });

    m.def("collect",
          [](const std::string& cfg, int n, std::uint64_t seed, std::vector<double> depths, const std::string& path) {
              const SimConfig sim = sim_from(cfg);
              HeapState heap = init_heap(sim, make_rng(seed, {0})());
              Rng rng = make_rng(seed, {1});
              CollectionConfig cc;
              if (!depths.empty()) cc.z_pool_cm = std::move(depths);
              const CollectionResult r = run_collection(heap, sim, n, cc, rng);
              save_dataset(r.dataset, path);
              return r.dataset.rows.size();
          },
          py::arg("config"), py::arg("n"), py::arg("seed"), py::arg("depths_cm"), py::arg("path"));
    m.def("dataset_masses", [](const std::string& path, bool train_split) {
        return load_dataset(path).masses(train_split ? Split::train : Split::eval);
    });
    m.def("train",
          [](const std::string& dataset_path, const std::string& cfg) {
              const TrainResult r = train(load_dataset(dataset_path), model_cfg_from(cfg));
              std::vector<py::tuple> log;
              for (const auto& e : r.log) log.push_back(py::make_tuple(e.epoch, e.train_nll, e.eval_nll));
              return py::make_tuple(r.params, r.best_epoch, log);
          },
          py::arg("dataset"), py::arg("config") = "");

    m.def("select_grasp",
          [](const ModelParams& model, const HeapState& heap, double target_g, double alpha, int stride_px,
             std::vector<double> depths) {
              SelectionConfig sc;
              sc.target_g = target_g;
              sc.alpha = alpha;
              sc.stride_px = stride_px;
              if (!depths.empty()) sc.z_candidates_cm = std::move(depths);
              return to_json(select_grasp(model, heap, sc)).dump();
          },
          py::arg("model"), py::arg("heap"), py::arg("target_g"), py::arg("alpha") = 1.0, py::arg("stride_px") = 15,
          py::arg("depths_cm") = std::vector<double>{});
    m.def("is_feasible", &is_feasible, py::arg("mu"), py::arg("sigma"), py::arg("target_g"), py::arg("alpha"));
    m.def("controller_speed",
          [](double current, double target, double start, double v_min, double v_max) {
              ControllerConfig c;
              c.speed = {v_min, v_max};
              return controller_speed(current, target, start, c);
          },
          py::arg("current_g"), py::arg("target_g"), py::arg("start_g"), py::arg("v_min") = 0.2, py::arg("v_max") = 1.0);

    m.def("run_episode",
          [](const ModelParams& model, HeapState& heap, const std::string& cfg, double target_g, double alpha,
             std::uint64_t seed) {
              EpisodeConfig ec;
              ec.selection.target_g = target_g;
              ec.selection.alpha = alpha;
              Rng rng = make_rng(seed);
              const EpisodeResult r = run_inference_episode(model, heap, sim_from(cfg), ec, rng);
              return py::dict(py::arg("status") = to_string(r.status), py::arg("grasped_g") = r.grasped_initial_g,
                              py::arg("final_g") = r.final_mass_g, py::arg("discarded_g") = r.discarded_g,
                              py::arg("retries") = r.retries, py::arg("heap_loss_g") = r.heap_loss_g,
                              py::arg("postgrasp_steps") = r.postgrasp_trace.size());
          },
          py::arg("model"), py::arg("heap"), py::arg("config"), py::arg("target_g"), py::arg("alpha") = 1.0,
          py::arg("seed") = 0);

    m.def("preset_names", &preset_names);
    m.def("run_experiment",
          [](const std::string& name, const std::string& cfg, const ModelParams* model, const std::string& dataset_path,
             int episodes, std::vector<double> targets, std::uint64_t seed, int workers) {
              ExperimentPreset p = preset_by_name(name);
              if (episodes > 0) p.episodes = episodes;
              if (!targets.empty()) p.targets_g = std::move(targets);
              p.seed = seed;
              std::optional<Dataset> ds;
              if (!dataset_path.empty()) ds = load_dataset(dataset_path);
              py::gil_scoped_release unlock;
              return to_json(run_experiment(p, sim_from(cfg), {model, ds ? &*ds : nullptr}, workers)).dump();
          },
          py::arg("preset"), py::arg("config") = "", py::arg("model") = nullptr, py::arg("dataset") = "",
          py::arg("episodes") = 0, py::arg("targets_g") = std::vector<double>{}, py::arg("seed") = 2024,
          py::arg("workers") = 1);

    m.def("bootstrap",
          [](const std::vector<int>& outcomes, int resamples, std::uint64_t seed) {
              std::vector<std::uint8_t> s(outcomes.begin(), outcomes.end());
              const BootstrapStat b = bootstrap(s, resamples, seed);
              return py::make_tuple(b.mean_pct, b.std_pct);
          },
          py::arg("outcomes"), py::arg("resamples") = 10000, py::arg("seed") = 0);
    m.def("percentile", [](const std::vector<double>& v, double p) { return nearest_rank_percentile(v, p); });
    m.def("histogram_modes",
          [](const std::vector<double>& masses, double bin_g, int window, double prominence) {
              const Histogram h = mass_histogram(masses, bin_g);
              return py::make_tuple(h.origin_g, h.counts, histogram_modes(h, window, prominence));
          },
          py::arg("masses"), py::arg("bin_g") = 2.0, py::arg("window") = 3, py::arg("prominence") = 0.0);
}
