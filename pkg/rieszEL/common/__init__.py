from rieszEL.common.kernels import PowerLaw, Tabulated

reg_kernels = {'power_law': PowerLaw, 'tabulated': Tabulated}
