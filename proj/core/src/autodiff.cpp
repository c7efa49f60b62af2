#include "fcdx/autodiff.hpp"

namespace fcdx {

// Anchor the two scalar instantiations used across the library so template
// errors surface here rather than in every client TU.
template void backward<float>(const VarT<float>&);
template void backward<double>(const VarT<double>&);
template void zero_grad<float>(const VarT<float>&);
template void zero_grad<double>(const VarT<double>&);

}  // namespace fcdx
