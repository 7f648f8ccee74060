#include "declust/grad_check.hpp"

#include <cmath>
#include <stdexcept>

namespace declust {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
    Tensor grad(x.shape);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.numel(); ++i) {
        double orig = probe.data[i];
        probe.data[i] = orig + h;
        double up = f(probe);
        probe.data[i] = orig - h;
        double down = f(probe);
        probe.data[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw std::invalid_argument("finite_diff_grad: non-finite evaluation at coordinate " +
                                        std::to_string(i));
        grad.data[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double rel_error(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("rel_error: shape mismatch " + shape_str(a.shape) + " vs " +
                                    shape_str(b.shape));
    double max_diff = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        max_diff = std::max(max_diff, std::abs(a.data[i] - b.data[i]));
        scale = std::max({scale, std::abs(a.data[i]), std::abs(b.data[i])});
    }
    return max_diff / scale;
}

}  // namespace declust
