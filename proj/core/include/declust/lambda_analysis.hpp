#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace declust {

/// A fixed similarity configuration for studying the loss as a scalar
/// function of the smoothing exponent: one positive similarity, the 2N-2
/// negative similarities, the temperature, and the exponent itself.
struct LambdaScene {
    double sim_pos = 1.0;
    std::vector<double> sim_negs;
    double tau = 0.5;
    double lambda = 2.0;

    void validate() const;
    /// P = exp(sim_pos / tau).
    double positive_term() const;
    /// B = 1 + sum_j exp(sim_neg_j / tau); always > 1.
    double negative_base() const;
};

/// L(lambda) = log(P + B^lambda) - log(P). Negative-log convention matching
/// the per-sample training loss, under which both derivatives below are
/// strictly positive.
double lambda_loss(const LambdaScene& s);

/// L'(lambda) = B^lambda ln(B) / (P + B^lambda) > 0.
double lambda_grad(const LambdaScene& s);

/// L''(lambda) = P B^lambda ln(B)^2 / (P + B^lambda)^2 > 0.
double lambda_hess(const LambdaScene& s);

/// L'' evaluated at the all-orthogonal-negatives limit, where B = 2N - 1:
/// P (2N-1)^lambda ln(2N-1)^2 / (P + (2N-1)^lambda)^2.
double limit_orthogonal_negatives(std::size_t n, double sim_pos, double tau, double lambda);

struct LambdaSweepRow {
    double lambda, loss, grad, hess;
};

/// Evaluates (L, L', L'') over a lambda grid for a fixed scene.
std::vector<LambdaSweepRow> lambda_sweep(LambdaScene scene, const std::vector<double>& lambdas);

/// CSV with header "lambda,loss,grad,hess".
std::string lambda_sweep_csv(const std::vector<LambdaSweepRow>& rows);

}  // namespace declust
