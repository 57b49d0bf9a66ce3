#pragma once

#include <string>

#include "fe/deep_kernel.hpp"
#include "fe/encoder.hpp"
#include "fe/node_basis.hpp"

namespace fe {

struct ModelIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kModelFormatVersion = 1;

enum class ModelKind { mlp, node, deep_kernel };

/// Reads just the model kind (for dispatch) after validating the version.
ModelKind peek_model_kind(const std::string& path);

/// Saves a function-encoder model (MLP or neural-ODE basis). provenance_json
/// must be a serialized JSON object (config echo, seed); pass "{}" if none.
void save_model(const FunctionEncoder& enc, const std::string& path,
                const std::string& provenance_json);

FunctionEncoder load_model(const std::string& path);

void save_dkl_model(const DeepKernelModel& model, const std::string& path,
                    const std::string& provenance_json);

DeepKernelModel load_dkl_model(const std::string& path);

}  // namespace fe
