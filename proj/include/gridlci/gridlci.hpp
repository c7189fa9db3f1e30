#ifndef GRIDLCI_GRIDLCI_HPP
#define GRIDLCI_GRIDLCI_HPP

#include "gridlci/errors.hpp"
#include "gridlci/grid_model.hpp"
#include "gridlci/case_io.hpp"
#include "gridlci/powerflow.hpp"
#include "gridlci/lci.hpp"
#include "gridlci/vsla.hpp"

#endif // GRIDLCI_GRIDLCI_HPP
