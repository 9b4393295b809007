#include <pybind11/pybind11.h>

namespace py = pybind11;

PYBIND11_MODULE(_hintlab, m) {
  m.doc() = "hintlab core bindings";
}
