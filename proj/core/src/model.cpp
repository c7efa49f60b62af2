#include "fcdx/model.hpp"

#include <cstring>

namespace fcdx {

template struct HeadsT<float>;
template struct HeadsT<double>;
template struct ModelT<float>;
template struct ModelT<double>;

Checkpoint snapshot_weights(const ParamSetT<float>& ps) {
  Checkpoint ck;
  for (const auto& [name, p] : ps.params) ck.put(name, p->value.clone());
  for (const auto& [name, st] : ps.bn_states) {
    ck.put(name + ".running_mean", st->running_mean.clone());
    ck.put(name + ".running_var", st->running_var.clone());
  }
  return ck;
}

void restore_weights(const Checkpoint& ck, ParamSetT<float>& ps) {
  auto take = [&](const std::string& name, Tensor& dst) {
    const Tensor& src = ck.get(name);
    if (!src.same_shape(dst))
      throw data_error("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape()) +
                       ", model expects " + shape_str(dst.shape()));
    std::memcpy(dst.data(), src.data(), static_cast<size_t>(dst.numel()) * sizeof(float));
  };
  for (auto& [name, p] : ps.params) take(name, p->value);
  for (auto& [name, st] : ps.bn_states) {
    take(name + ".running_mean", st->running_mean);
    take(name + ".running_var", st->running_var);
  }
}

}  // namespace fcdx
