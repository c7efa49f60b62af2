#include "fcdx/losses.hpp"

namespace fcdx {

template VarT<float> rating_cross_entropy<float>(const VarT<float>&, int);
template VarT<double> rating_cross_entropy<double>(const VarT<double>&, int);

}  // namespace fcdx
