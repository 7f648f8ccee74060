#include "declust/lambda_analysis.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace declust {

void LambdaScene::validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("LambdaScene: tau must be > 0");
    if (!(lambda >= 0.0)) throw std::invalid_argument("LambdaScene: lambda must be >= 0");
    if (sim_negs.size() < 2 || sim_negs.size() % 2 != 0)
        throw std::invalid_argument("LambdaScene: need an even number (>= 2) of negatives");
    if (sim_pos < -1.0 || sim_pos > 1.0)
        throw std::invalid_argument("LambdaScene: sim_pos outside [-1, 1]");
    for (double s : sim_negs)
        if (s < -1.0 || s > 1.0)
            throw std::invalid_argument("LambdaScene: negative similarity outside [-1, 1]");
}

double LambdaScene::positive_term() const { return std::exp(sim_pos / tau); }

double LambdaScene::negative_base() const {
    double b = 1.0;
    for (double s : sim_negs) b += std::exp(s / tau);
    return b;
}

double lambda_loss(const LambdaScene& s) {
    s.validate();
    double p = s.positive_term();
    double b = s.negative_base();
    return std::log(p + std::pow(b, s.lambda)) - std::log(p);
}

double lambda_grad(const LambdaScene& s) {
    s.validate();
    double p = s.positive_term();
    double bl = std::pow(s.negative_base(), s.lambda);
    return bl * std::log(s.negative_base()) / (p + bl);
}

double lambda_hess(const LambdaScene& s) {
    s.validate();
    double p = s.positive_term();
    double b = s.negative_base();
    double bl = std::pow(b, s.lambda);
    double lb = std::log(b);
    return p * bl * lb * lb / ((p + bl) * (p + bl));
}

double limit_orthogonal_negatives(std::size_t n, double sim_pos, double tau, double lambda) {
    if (n < 2) throw std::invalid_argument("limit_orthogonal_negatives: needs N >= 2");
    LambdaScene s;
    s.sim_pos = sim_pos;
    s.tau = tau;
    s.lambda = lambda;
    s.sim_negs.assign(2 * n - 2, 0.0);
    return lambda_hess(s);
}

std::vector<LambdaSweepRow> lambda_sweep(LambdaScene scene, const std::vector<double>& lambdas) {
    std::vector<LambdaSweepRow> rows;
    rows.reserve(lambdas.size());
    for (double l : lambdas) {
        scene.lambda = l;
        rows.push_back({l, lambda_loss(scene), lambda_grad(scene), lambda_hess(scene)});
    }
    return rows;
}

std::string lambda_sweep_csv(const std::vector<LambdaSweepRow>& rows) {
    std::ostringstream out;
    out.precision(17);
    out << "lambda,loss,grad,hess\n";
    for (const LambdaSweepRow& r : rows)
        out << r.lambda << "," << r.loss << "," << r.grad << "," << r.hess << "\n";
    return out.str();
}

}  // namespace declust
