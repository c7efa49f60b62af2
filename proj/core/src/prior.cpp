#include "fcdx/prior.hpp"

namespace fcdx {

template struct PriorNetT<float>;
template struct PriorNetT<double>;
template VarT<float> reparameterize_with<float>(const VarT<float>&, const VarT<float>&, TensorT<float>);
template VarT<double> reparameterize_with<double>(const VarT<double>&, const VarT<double>&, TensorT<double>);
template VarT<float> reparameterize<float>(const VarT<float>&, const VarT<float>&, RandomStream);
template VarT<double> reparameterize<double>(const VarT<double>&, const VarT<double>&, RandomStream);

}  // namespace fcdx
