#include "fe/model_io.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace fe {

using nlohmann::json;

namespace {

// FNV-1a over the raw parameter bits; guards against silent truncation.
std::uint64_t param_checksum(const std::vector<double>& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (double d : params) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xffULL;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelIoError("cannot open model file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ModelIoError("model file " + path + " is truncated or malformed: " + e.what());
    }
    return j;
}

const json& require(const json& j, const char* key, const std::string& path) {
    auto it = j.find(key);
    if (it == j.end()) {
        throw ModelIoError("model file " + path + " is missing section '" + key + "'");
    }
    return *it;
}

void check_version(const json& j, const std::string& path) {
    const int v = require(j, "format_version", path).get<int>();
    if (v != kModelFormatVersion) {
        throw ModelIoError("model file " + path + " has format_version " + std::to_string(v) +
                           "; this build reads version " + std::to_string(kModelFormatVersion));
    }
}

json spec_to_json(const MlpSpec& spec) {
    return json{{"input_dim", spec.input_dim},
                {"hidden_widths", spec.hidden_widths},
                {"output_dim", spec.output_dim},
                {"n_basis", spec.n_basis},
                {"architecture", to_string(spec.architecture)},
                {"activation", to_string(spec.activation)}};
}

MlpSpec spec_from_json(const json& j, const std::string& path) {
    MlpSpec spec;
    spec.input_dim = require(j, "input_dim", path).get<std::size_t>();
    spec.hidden_widths = require(j, "hidden_widths", path).get<std::vector<std::size_t>>();
    spec.output_dim = require(j, "output_dim", path).get<std::size_t>();
    spec.n_basis = require(j, "n_basis", path).get<std::size_t>();
    spec.architecture = architecture_from_string(require(j, "architecture", path).get<std::string>());
    spec.activation = activation_from_string(require(j, "activation", path).get<std::string>());
    return spec;
}

void write_file(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ModelIoError("cannot write model file: " + path);
    out << j.dump(2) << "\n";
}

void check_params(const json& j, const std::vector<double>& params, const std::string& path) {
    const std::uint64_t stored = require(j, "checksum", path).get<std::uint64_t>();
    if (stored != param_checksum(params)) {
        throw ModelIoError("model file " + path + " failed the parameter checksum");
    }
}

}  // namespace

ModelKind peek_model_kind(const std::string& path) {
    const json j = load_json(path);
    check_version(j, path);
    const std::string kind = require(j, "model_kind", path).get<std::string>();
    if (kind == "mlp") return ModelKind::mlp;
    if (kind == "node") return ModelKind::node;
    if (kind == "deep_kernel") return ModelKind::deep_kernel;
    throw ModelIoError("model file " + path + " has unknown model_kind '" + kind + "'");
}

void save_model(const FunctionEncoder& enc, const std::string& path,
                const std::string& provenance_json) {
    const auto* node = dynamic_cast<const NodeBasisSet*>(enc.basis.get());
    const BasisSet* basis = node != nullptr ? &node->fields()
                                            : dynamic_cast<const BasisSet*>(enc.basis.get());
    if (basis == nullptr) throw ModelIoError("save_model: unsupported basis type");
    json j;
    j["format_version"] = kModelFormatVersion;
    j["model_kind"] = node != nullptr ? "node" : "mlp";
    j["lambda"] = enc.lambda;
    j["spec"] = spec_to_json(basis->spec());
    j["seed"] = basis->rng_seed();
    if (node != nullptr) {
        j["node"] = json{{"state_offset", node->state_offset()},
                         {"integrator_steps", node->integrator_steps()}};
    }
    j["parameters"] = basis->parameters();
    j["checksum"] = param_checksum(basis->parameters());
    j["provenance"] = json::parse(provenance_json);
    write_file(j, path);
}

FunctionEncoder load_model(const std::string& path) {
    const json j = load_json(path);
    check_version(j, path);
    const std::string kind = require(j, "model_kind", path).get<std::string>();
    if (kind != "mlp" && kind != "node") {
        throw ModelIoError("load_model: " + path + " holds a '" + kind + "' model");
    }
    const MlpSpec spec = spec_from_json(require(j, "spec", path), path);
    const std::uint64_t seed = require(j, "seed", path).get<std::uint64_t>();
    const auto params = require(j, "parameters", path).get<std::vector<double>>();
    check_params(j, params, path);
    BasisSet basis(spec, seed);
    if (params.size() != basis.parameters().size()) {
        throw ModelIoError("model file " + path + " parameter count does not match its spec");
    }
    basis.parameters() = params;
    const double lambda = require(j, "lambda", path).get<double>();
    if (kind == "node") {
        const json& nj = require(j, "node", path);
        NodeBasisSet node(std::move(basis), require(nj, "state_offset", path).get<std::size_t>(),
                          require(nj, "integrator_steps", path).get<std::size_t>());
        return FunctionEncoder(std::make_shared<NodeBasisSet>(std::move(node)), lambda);
    }
    return FunctionEncoder(std::make_shared<BasisSet>(std::move(basis)), lambda);
}

void save_dkl_model(const DeepKernelModel& model, const std::string& path,
                    const std::string& provenance_json) {
    json j;
    j["format_version"] = kModelFormatVersion;
    j["model_kind"] = "deep_kernel";
    j["lambda"] = model.lambda();
    j["spec"] = spec_to_json(model.feature_net().spec());
    j["seed"] = model.feature_net().rng_seed();
    j["kernel"] = json{{"kind", model.kind() == KernelKind::rbf_ard ? "rbf_ard" : "linear"}};
    const std::vector<double> flat = model.flat_parameters();
    j["parameters"] = flat;
    j["checksum"] = param_checksum(flat);
    j["provenance"] = json::parse(provenance_json);
    write_file(j, path);
}

DeepKernelModel load_dkl_model(const std::string& path) {
    const json j = load_json(path);
    check_version(j, path);
    if (require(j, "model_kind", path).get<std::string>() != "deep_kernel") {
        throw ModelIoError("load_dkl_model: " + path + " is not a deep_kernel model");
    }
    const MlpSpec spec = spec_from_json(require(j, "spec", path), path);
    const std::uint64_t seed = require(j, "seed", path).get<std::uint64_t>();
    const std::string kind_s = require(require(j, "kernel", path), "kind", path).get<std::string>();
    const KernelKind kind = kind_s == "rbf_ard" ? KernelKind::rbf_ard : KernelKind::linear;
    DeepKernelModel model(spec, kind, require(j, "lambda", path).get<double>(), seed);
    const auto flat = require(j, "parameters", path).get<std::vector<double>>();
    check_params(j, flat, path);
    model.set_flat_parameters(flat);
    return model;
}

}  // namespace fe
