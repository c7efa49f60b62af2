#include "fcdx/nsam.hpp"

namespace fcdx {

template VarT<float> attention<float>(const VarT<float>&);
template VarT<double> attention<double>(const VarT<double>&);
template struct NsamT<float>;
template struct NsamT<double>;

}  // namespace fcdx
