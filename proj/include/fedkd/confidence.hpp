#pragma once

// Entropy of penultimate-layer activations and per-sample selection of
// the most confident (lowest-entropy) teacher.

#include <span>
#include <vector>

#include "fedkd/matrix.hpp"

namespace fedkd {

struct EntropyMode {
    // Normalize the row to a probability vector before taking
    // -sum p_i ln p_i. Without it the raw activations are used and only
    // positive entries contribute.
    bool normalize = true;
    // Rows whose entries sum below epsilon (dead relu output) get +inf
    // entropy so a dead model is never judged most confident.
    double epsilon = 1e-12;
};

// Shannon entropy (natural log) of one activation row, 0*ln(0) == 0.
// Negative entries throw DomainError; a degenerate row returns +inf.
double entropy(const Eigen::Ref<const Eigen::RowVectorXd>& x, const EntropyMode& mode = {});

struct TeacherSelection {
    std::vector<int> chosen;        // per sample, index of the winning client
    Matrix entropies;               // (samples x clients)
    std::vector<long> histogram;    // per client, number of samples won
};

// Row-wise entropies per client (used by select_teachers; exposed so the
// argmin step can be tested on transformed entropy grids).
Matrix entropy_matrix(std::span<const Matrix> penultimates, const EntropyMode& mode = {});

// Per-row argmin with ties broken by the lowest client index. A row of
// all +inf falls back to client 0.
std::vector<int> select_from_entropies(const Matrix& entropies);

// chosen[j] = argmin over clients of entropy(penultimates[client].row(j)).
// All client matrices must share the same shape.
TeacherSelection select_teachers(std::span<const Matrix> penultimates,
                                 const EntropyMode& mode = {});

// Row j of the result is row j of the chosen client's matrix, copied
// exactly (no blending).
Matrix assemble_targets(std::span<const Matrix> penultimates, const TeacherSelection& selection);

}  // namespace fedkd
