#include "gaitmm/losses.hpp"

#include <cmath>
#include <string>

#include "gaitmm/error.hpp"

namespace gaitmm {

TripletResult triplet_loss(std::span<const StripMatrix> embeddings, std::span<const int> labels, double margin,
                           bool want_grad) {
  const std::size_t n = embeddings.size();
  if (labels.size() != n) fail(ErrorKind::kStructural, "triplet loss: label count does not match the batch");
  if (n == 0) fail(ErrorKind::kStructural, "triplet loss: empty batch");
  const Eigen::Index strips = embeddings[0].rows(), dim = embeddings[0].cols();
  for (const auto& e : embeddings) {
    if (e.rows() != strips || e.cols() != dim) fail(ErrorKind::kStructural, "triplet loss: ragged embeddings");
  }

  TripletResult result;
  if (want_grad) result.grad.assign(n, StripMatrix::Zero(strips, dim));
  std::size_t nonzero_total = 0;
  Eigen::MatrixXd dist(n, n), coeff(n, n);
  for (Eigen::Index s = 0; s < strips; ++s) {
    for (std::size_t i = 0; i < n; ++i) {
      dist(i, i) = 0.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double d = (embeddings[i].row(s) - embeddings[j].row(s)).norm();
        dist(i, j) = dist(j, i) = d;
      }
    }
    coeff.setZero();
    double sum = 0.0;
    std::size_t nonzero = 0;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t p = 0; p < n; ++p) {
        if (p == a || labels[p] != labels[a]) continue;
        for (std::size_t q = 0; q < n; ++q) {
          if (labels[q] == labels[a]) continue;
          ++result.triplets;
          const double l = dist(a, p) - dist(a, q) + margin;
          if (l > 0.0) {
            sum += l;
            ++nonzero;
            coeff(a, p) += 1.0;
            coeff(a, q) -= 1.0;
          }
        }
      }
    }
    nonzero_total += nonzero;
    if (nonzero == 0) continue;
    result.loss += sum / static_cast<double>(nonzero);
    if (!want_grad) continue;
    const double scale = 1.0 / (static_cast<double>(nonzero) * static_cast<double>(strips));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (coeff(i, j) == 0.0 || dist(i, j) == 0.0) continue;
        const Eigen::RowVectorXd dir = (embeddings[i].row(s) - embeddings[j].row(s)) / dist(i, j);
        const double c = coeff(i, j) * scale;
        result.grad[i].row(s) += c * dir;
        result.grad[j].row(s) -= c * dir;
      }
    }
  }
  if (result.triplets == 0) {
    fail(ErrorKind::kStructural, "triplet loss: batch contains no valid (anchor, positive, negative) triplet");
  }
  result.loss /= static_cast<double>(strips);
  result.nonzero_fraction = static_cast<double>(nonzero_total) / static_cast<double>(result.triplets);
  return result;
}

CrossEntropyResult cross_entropy_loss(std::span<const StripMatrix> logits, std::span<const int> labels,
                                      bool want_grad) {
  const std::size_t n = logits.size();
  if (labels.size() != n) fail(ErrorKind::kData, "cross-entropy: label count does not match the batch");
  CrossEntropyResult result;
  if (n == 0) return result;
  const Eigen::Index strips = logits[0].rows(), classes = logits[0].cols();
  const double norm = 1.0 / (static_cast<double>(n) * static_cast<double>(strips));
  if (want_grad) result.grad.assign(n, StripMatrix::Zero(strips, classes));
  for (std::size_t i = 0; i < n; ++i) {
    if (logits[i].rows() != strips || logits[i].cols() != classes) {
      fail(ErrorKind::kData, "cross-entropy: ragged logits");
    }
    if (labels[i] < 0 || labels[i] >= classes) {
      fail(ErrorKind::kData, "cross-entropy: label " + std::to_string(labels[i]) + " outside [0, " +
                                 std::to_string(classes) + ")");
    }
    for (Eigen::Index s = 0; s < strips; ++s) {
      const auto row = logits[i].row(s);
      const double m = row.maxCoeff();
      const Eigen::RowVectorXd e = (row.array() - m).exp();
      const double z = e.sum();
      result.loss += (m + std::log(z) - row(labels[i])) * norm;
      if (want_grad) {
        result.grad[i].row(s) = e / z * norm;
        result.grad[i](s, labels[i]) -= norm;
      }
    }
  }
  return result;
}

CombinedLoss combined_loss(std::span<const StripMatrix> embeddings, std::span<const StripMatrix> logits,
                           std::span<const int> labels, double margin, const LossWeights& weights, bool want_grad) {
  TripletResult tri = triplet_loss(embeddings, labels, margin, want_grad);
  CrossEntropyResult ce = cross_entropy_loss(logits, labels, want_grad);
  CombinedLoss out;
  out.report.triplet = tri.loss;
  out.report.cross_entropy = ce.loss;
  out.report.total = weights.triplet * tri.loss + weights.cross_entropy * ce.loss;
  out.report.nonzero_triplet_fraction = tri.nonzero_fraction;
  if (want_grad) {
    out.grad_embeddings = std::move(tri.grad);
    for (auto& g : out.grad_embeddings) g *= weights.triplet;
    out.grad_logits = std::move(ce.grad);
    for (auto& g : out.grad_logits) g *= weights.cross_entropy;
  }
  return out;
}

}  // namespace gaitmm
