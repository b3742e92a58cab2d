#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "ehrgrid/error.hpp"

namespace ehrgrid {

// Mann-Whitney formulation: concordant pairs count 1, tied-score pairs
// count 1/2. Pair counting is done in integers over score-tie blocks and
// divided once at the end, so the result is the exactly rounded rational
// (2*concordant + ties) / (2 * n_pos * n_neg).
inline double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::int64_t n_pos = 0, n_neg = 0;
    for (int y : labels) (y ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw Error(ErrorCode::degenerate_labels, "need both classes to rank");

    std::int64_t numer2 = 0;  // 2*concordant + tied
    std::int64_t neg_below = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        std::int64_t block_pos = 0, block_neg = 0;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] ? block_pos : block_neg)++;
            ++j;
        }
        numer2 += 2 * block_pos * neg_below + block_pos * block_neg;
        neg_below += block_neg;
        i = j;
    }
    return static_cast<double>(numer2) / (2.0 * static_cast<double>(n_pos * n_neg));
}

// Average precision over descending score thresholds, ties folded into one
// block: AP = sum over blocks of (recall gain * precision at the block).
inline double auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::int64_t n_pos = 0;
    for (int y : labels) n_pos += y ? 1 : 0;
    if (n_pos == 0) throw Error(ErrorCode::degenerate_labels, "need at least one positive");

    double ap = 0.0;
    std::int64_t tp = 0, fp = 0;
    double prev_recall = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            (labels[order[j]] ? tp : fp)++;
            ++j;
        }
        double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

struct ClassifyMetrics {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Hard thresholding at score >= threshold. F1 is 0 by convention when
// there are no positive predictions (precision + recall = 0).
inline ClassifyMetrics classify_metrics(const std::vector<double>& scores,
                                        const std::vector<int>& labels, double threshold = 0.5) {
    std::int64_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        bool pred = scores[i] >= threshold;
        bool truth = labels[i] != 0;
        if (pred && truth) ++tp;
        else if (pred && !truth) ++fp;
        else if (!pred && truth) ++fn;
        else ++tn;
    }
    ClassifyMetrics m;
    const std::int64_t total = tp + tn + fp + fn;
    m.accuracy = total > 0 ? static_cast<double>(tp + tn) / static_cast<double>(total) : 0.0;
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                      : 0.0;
    return m;
}

struct MetricsReport {
    double auroc = 0.0;
    double auprc = 0.0;
    double accuracy = 0.0;
    double f1 = 0.0;
    double threshold = 0.5;
    std::int64_t n_pos = 0;
    std::int64_t n_neg = 0;
};

inline MetricsReport compute_metrics(const std::vector<double>& scores,
                                     const std::vector<int>& labels, double threshold = 0.5) {
    MetricsReport r;
    r.threshold = threshold;
    for (int y : labels) (y ? r.n_pos : r.n_neg)++;
    r.auroc = auroc(scores, labels);
    r.auprc = auprc(scores, labels);
    auto cm = classify_metrics(scores, labels, threshold);
    r.accuracy = cm.accuracy;
    r.f1 = cm.f1;
    return r;
}

inline double sigmoid(double z) {
    return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

struct LogRegOptions {
    double l2 = 1e-2;       // excluded from the bias
    int epochs = 300;
    double lr = 1.0;        // largest step the line search may take
    std::uint64_t seed = 0;  // reserved; training is deterministic regardless
};

struct LogRegModel {
    std::vector<double> weights;
    double bias = 0.0;

    double score(const double* x) const {
        double z = bias;
        for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
        return sigmoid(z);
    }
};

// Full-batch gradient descent from zero weights on mean log-loss plus
// (l2/2)*||w||^2, with Armijo backtracking so every epoch lowers the loss
// no matter how ill-conditioned the features are. Plain and slow, but
// convex, dependency-free, and exactly reproducible, which is all the
// baseline needs to demonstrate signal.
inline LogRegModel train_logreg(const std::vector<const double*>& rows, std::size_t dim,
                                const std::vector<int>& labels, const LogRegOptions& opt) {
    const std::size_t n = rows.size();
    if (n == 0 || labels.size() != n)
        throw Error(ErrorCode::internal_error, "training set shape mismatch");
    const double inv_n = 1.0 / static_cast<double>(n);

    // Regularized mean log-loss and, when asked, its gradient.
    auto objective = [&](const std::vector<double>& w, double b, std::vector<double>* grad,
                         double* grad_bias) {
        if (grad) {
            std::fill(grad->begin(), grad->end(), 0.0);
            *grad_bias = 0.0;
        }
        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = rows[i];
            double z = b;
            for (std::size_t j = 0; j < dim; ++j) z += w[j] * x[j];
            loss += softplus(labels[i] ? -z : z);
            if (grad) {
                const double err = sigmoid(z) - (labels[i] ? 1.0 : 0.0);
                for (std::size_t j = 0; j < dim; ++j) (*grad)[j] += err * x[j];
                *grad_bias += err;
            }
        }
        loss *= inv_n;
        for (std::size_t j = 0; j < dim; ++j) loss += 0.5 * opt.l2 * w[j] * w[j];
        if (grad) {
            for (std::size_t j = 0; j < dim; ++j)
                (*grad)[j] = (*grad)[j] * inv_n + opt.l2 * w[j];
            *grad_bias *= inv_n;
        }
        return loss;
    };

    // Columns arrive on wildly different scales (standardized values next to
    // raw hour counts), so precondition by the diagonal of the Hessian at the
    // origin: h_j = sigmoid'(0) * mean(x_j^2) + l2. This is one pass over the
    // data and flattens the per-column step sizes.
    std::vector<double> precond(dim, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dim; ++j) precond[j] += rows[i][j] * rows[i][j];
    for (std::size_t j = 0; j < dim; ++j)
        precond[j] = 1.0 / std::max(0.25 * precond[j] * inv_n + opt.l2, 1e-12);
    const double precond_bias = 1.0 / 0.25;

    LogRegModel model;
    model.weights.assign(dim, 0.0);
    std::vector<double> grad(dim, 0.0), trial(dim, 0.0);
    double step = opt.lr;
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        double grad_bias = 0.0;
        const double loss = objective(model.weights, model.bias, &grad, &grad_bias);
        if (!std::isfinite(loss))
            throw Error(ErrorCode::non_finite_loss,
                        "loss diverged at epoch " + std::to_string(epoch));
        // Directional derivative along the preconditioned direction; positive
        // because the preconditioner is positive definite.
        double slope = grad_bias * grad_bias * precond_bias;
        for (std::size_t j = 0; j < dim; ++j) slope += grad[j] * grad[j] * precond[j];
        if (slope == 0.0) break;  // stationary; further epochs are no-ops

        // Let the step grow back after cautious epochs, never past opt.lr.
        step = std::min(opt.lr, step * 2.0);
        double trial_bias = 0.0, trial_loss = 0.0;
        for (;;) {
            for (std::size_t j = 0; j < dim; ++j)
                trial[j] = model.weights[j] - step * precond[j] * grad[j];
            trial_bias = model.bias - step * precond_bias * grad_bias;
            trial_loss = objective(trial, trial_bias, nullptr, nullptr);
            if (trial_loss <= loss - 1e-4 * step * slope) break;
            step *= 0.5;
            if (step < 1e-12)
                throw Error(ErrorCode::non_finite_loss,
                            "line search stalled at epoch " + std::to_string(epoch));
        }
        model.weights.swap(trial);
        model.bias = trial_bias;
    }
    return model;
}

// Mean log-loss of a model on a set; the monotone-descent property test
// watches this quantity between epochs.
inline double logreg_loss(const LogRegModel& model, const std::vector<const double*>& rows,
                          const std::vector<int>& labels, double l2) {
    double loss = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double z = model.bias;
        for (std::size_t j = 0; j < model.weights.size(); ++j) z += model.weights[j] * rows[i][j];
        loss += softplus(labels[i] ? -z : z);
    }
    loss /= static_cast<double>(rows.size());
    for (double w : model.weights) loss += 0.5 * l2 * w * w;
    return loss;
}

// Unweighted mean of one-vs-rest AUROCs over the classes that actually
// appear on both sides; classes missing entirely from the labels are
// skipped rather than poisoning the average.
inline double macro_auroc(const std::vector<std::vector<double>>& class_scores,
                          const std::vector<int>& labels) {
    double sum = 0.0;
    int counted = 0;
    for (std::size_t c = 0; c < class_scores.size(); ++c) {
        std::int64_t pos = 0;
        for (int y : labels) pos += (y == static_cast<int>(c)) ? 1 : 0;
        if (pos == 0 || pos == static_cast<std::int64_t>(labels.size())) continue;
        std::vector<int> binary(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i)
            binary[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
        sum += auroc(class_scores[c], binary);
        ++counted;
    }
    if (counted == 0) throw Error(ErrorCode::degenerate_labels, "no class appears on both sides");
    return sum / static_cast<double>(counted);
}

}  // namespace ehrgrid
