#include "addnet/model.hpp"

namespace addnet::model {

template class Detector<float>;
template class Detector<double>;

}  // namespace addnet::model
