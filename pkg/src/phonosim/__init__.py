"""Voice-production simulation: two-mass vocal folds coupled to a 1-D tract.

Submodules:

* params     -- physical constants, smoothing coefficients, run configuration
* geometry   -- vocal-tract area function from tabulated cross-sections
* autodiff   -- small reverse-mode tape and forward jets
* glottis    -- fold dynamics, glottal flow and driving forces
* tract      -- transmission-line acoustics, wall losses, radiation end
* reference  -- time-domain finite-difference/RK4 reference solver
* pinn       -- physics-informed neural solver with trainable period or
                subglottal pressure
* analysis   -- spectra, formant estimation, waveform file handling
* cli        -- command-line entry points
"""

__version__ = "0.1.0"
