from .lwm import Correspondence2D2D, LwmModel, fit_lwm, undistort_point, undistort_points, undistort_polyline
from .projection import Correspondence3D2D, RansacConfig, calibrate_view, camera_from_projection, decompose_projection, dlt, normalize_projection, ransac_projection, refine_projection, rms_reprojection_error
__all__ = ['Correspondence2D2D', 'LwmModel', 'fit_lwm', 'undistort_point', 'undistort_points', 'undistort_polyline', 'Correspondence3D2D', 'RansacConfig', 'calibrate_view', 'camera_from_projection', 'decompose_projection', 'dlt', 'normalize_projection', 'ransac_projection', 'refine_projection', 'rms_reprojection_error']
