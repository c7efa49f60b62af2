#include "fcdx/backbone.hpp"

namespace fcdx {

template struct DenseLayerUnitT<float>;
template struct DenseLayerUnitT<double>;
template struct TransitionT<float>;
template struct TransitionT<double>;
template struct BackboneT<float>;
template struct BackboneT<double>;

}  // namespace fcdx
