#include "fedkd/confidence.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "fedkd/errors.hpp"

namespace fedkd {

double entropy(const Eigen::Ref<const Eigen::RowVectorXd>& x, const EntropyMode& mode) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (x[i] < 0.0) {
            throw DomainError("entropy: negative entry " + std::to_string(x[i]) +
                              " at position " + std::to_string(i));
        }
        sum += x[i];
    }
    if (sum < mode.epsilon) {
        return std::numeric_limits<double>::infinity();
    }
    double h = 0.0;
    if (mode.normalize) {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double p = x[i] / sum;
            if (p > 0.0) h -= p * std::log(p);
        }
    } else {
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            if (x[i] > 0.0) h -= x[i] * std::log(x[i]);
        }
    }
    return h;
}

Matrix entropy_matrix(std::span<const Matrix> penultimates, const EntropyMode& mode) {
    if (penultimates.empty()) {
        throw ConfigError("entropy_matrix: no client penultimates");
    }
    const Index rows = penultimates[0].rows();
    const Index cols = penultimates[0].cols();
    for (std::size_t k = 1; k < penultimates.size(); ++k) {
        if (penultimates[k].rows() != rows || penultimates[k].cols() != cols) {
            throw ShapeError("entropy_matrix: client " + std::to_string(k) + " shape " +
                             shape_str(penultimates[k]) + " differs from client 0 " +
                             shape_str(penultimates[0]));
        }
    }
    Matrix entropies(rows, static_cast<Index>(penultimates.size()));
    for (std::size_t k = 0; k < penultimates.size(); ++k) {
        for (Index j = 0; j < rows; ++j) {
            entropies(j, static_cast<Index>(k)) = entropy(penultimates[k].row(j), mode);
        }
    }
    return entropies;
}

std::vector<int> select_from_entropies(const Matrix& entropies) {
    std::vector<int> chosen(static_cast<std::size_t>(entropies.rows()));
    for (Index j = 0; j < entropies.rows(); ++j) {
        int best = 0;
        for (Index k = 1; k < entropies.cols(); ++k) {
            if (entropies(j, k) < entropies(j, best)) {
                best = static_cast<int>(k);
            }
        }
        chosen[static_cast<std::size_t>(j)] = best;
    }
    return chosen;
}

TeacherSelection select_teachers(std::span<const Matrix> penultimates, const EntropyMode& mode) {
    TeacherSelection selection;
    selection.entropies = entropy_matrix(penultimates, mode);
    selection.chosen = select_from_entropies(selection.entropies);
    selection.histogram.assign(penultimates.size(), 0);
    for (int k : selection.chosen) {
        selection.histogram[static_cast<std::size_t>(k)] += 1;
    }
    return selection;
}

Matrix assemble_targets(std::span<const Matrix> penultimates,
                        const TeacherSelection& selection) {
    if (penultimates.empty()) {
        throw ConfigError("assemble_targets: no client penultimates");
    }
    const Index rows = penultimates[0].rows();
    if (selection.chosen.size() != static_cast<std::size_t>(rows)) {
        throw std::logic_error("assemble_targets: selection covers " +
                               std::to_string(selection.chosen.size()) + " samples, batch has " +
                               std::to_string(rows));
    }
    Matrix targets(rows, penultimates[0].cols());
    for (Index j = 0; j < rows; ++j) {
        const int k = selection.chosen[static_cast<std::size_t>(j)];
        if (k < 0 || static_cast<std::size_t>(k) >= penultimates.size()) {
            throw std::logic_error("assemble_targets: client index " + std::to_string(k) +
                                   " out of range");
        }
        targets.row(j) = penultimates[static_cast<std::size_t>(k)].row(j);
    }
    return targets;
}

}  // namespace fedkd
