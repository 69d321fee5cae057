#pragma once

#include <stdexcept>
#include <string>

namespace milagro {

// One exception type per contract-level failure. Catch sites (CLI, harness)
// map these onto exit codes.

struct TaxonomyMismatch : std::runtime_error {
    explicit TaxonomyMismatch(const std::string& m) : std::runtime_error(m) {}
};
struct AmbiguousLabel : std::runtime_error {
    explicit AmbiguousLabel(const std::string& m) : std::runtime_error(m) {}
};
struct DegenerateGeometry : std::runtime_error {
    explicit DegenerateGeometry(const std::string& m) : std::runtime_error(m) {}
};
struct SceneInvalid : std::runtime_error {
    explicit SceneInvalid(const std::string& m) : std::runtime_error(m) {}
};
struct InsufficientBeacons : std::runtime_error {
    explicit InsufficientBeacons(const std::string& m) : std::runtime_error(m) {}
};
struct FailedCapture : std::runtime_error {
    explicit FailedCapture(const std::string& m) : std::runtime_error(m) {}
};
struct EmptyTrainingSet : std::runtime_error {
    explicit EmptyTrainingSet(const std::string& m) : std::runtime_error(m) {}
};
struct ShapeMismatch : std::runtime_error {
    explicit ShapeMismatch(const std::string& m) : std::runtime_error(m) {}
};
struct EmptyDataset : std::runtime_error {
    explicit EmptyDataset(const std::string& m) : std::runtime_error(m) {}
};
struct LabelOutsideTaxonomy : std::runtime_error {
    explicit LabelOutsideTaxonomy(const std::string& m) : std::runtime_error(m) {}
};
struct EmptyList : std::runtime_error {
    explicit EmptyList(const std::string& m) : std::runtime_error(m) {}
};
struct IoFailure : std::runtime_error {
    explicit IoFailure(const std::string& m) : std::runtime_error(m) {}
};
struct SchemaVersionMismatch : std::runtime_error {
    explicit SchemaVersionMismatch(const std::string& m) : std::runtime_error(m) {}
};
struct CorruptChecksum : std::runtime_error {
    explicit CorruptChecksum(const std::string& m) : std::runtime_error(m) {}
};
struct LengthMismatch : std::runtime_error {
    explicit LengthMismatch(const std::string& m) : std::runtime_error(m) {}
};
struct InvalidTrajectory : std::runtime_error {
    explicit InvalidTrajectory(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace milagro
