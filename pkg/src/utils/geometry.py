"""Geometry utilities for planar and 3D rigid transforms."""

import cv2
import numpy as np


class RigidGeometry:
    """Handles rigid-transform calculations shared by the simulator and filter."""

    @staticmethod
    def rot2d(theta):
        """
        Planar rotation matrices.

        Args:
            theta: Angle in radians, scalar or array of shape (...)

        Returns:
            Array of shape (..., 2, 2)
        """
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], -2)

    @staticmethod
    def rotz(theta):
        """Rotation about the world z axis as a 3x3 matrix."""
        c, s = np.cos(theta), np.sin(theta)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    @staticmethod
    def cross2d(a, b):
        """z component of the cross product of planar vectors (broadcasting)."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]

    @staticmethod
    def perp(v):
        """k x v for planar vectors: rotate by +90 degrees."""
        v = np.asarray(v, dtype=float)
        return np.stack([-v[..., 1], v[..., 0]], -1)

    @staticmethod
    def wrap_angle(theta):
        """Wrap angles into [-pi, pi)."""
        return (np.asarray(theta) + np.pi) % (2.0 * np.pi) - np.pi

    @staticmethod
    def local_to_world_2d(points, pose):
        """
        Map planar points from a link frame to the world frame.

        Args:
            points: Array (..., 2) in the link frame
            pose: Array (..., 3) of (x, y, theta); broadcasts against points

        Returns:
            Array (..., 2) in the world frame
        """
        pose = np.asarray(pose, dtype=float)
        R = RigidGeometry.rot2d(pose[..., 2])
        return np.einsum('...ij,...j->...i', R, np.asarray(points, dtype=float)) + pose[..., :2]

    @staticmethod
    def world_to_local_2d(points, pose):
        """Inverse of local_to_world_2d."""
        pose = np.asarray(pose, dtype=float)
        R = RigidGeometry.rot2d(pose[..., 2])
        d = np.asarray(points, dtype=float) - pose[..., :2]
        return np.einsum('...ji,...j->...i', R, d)

    @staticmethod
    def rotate_vectors_2d(vectors, theta):
        """Rotate planar vectors by theta (broadcasting)."""
        R = RigidGeometry.rot2d(theta)
        return np.einsum('...ij,...j->...i', R, np.asarray(vectors, dtype=float))

    @staticmethod
    def axis_angle_matrix(axis, angle):
        """
        Rotation matrix for a rotation of `angle` about unit `axis`.

        Args:
            axis: Unit 3-vector
            angle: Angle in radians

        Returns:
            3x3 rotation matrix
        """
        rvec = np.asarray(axis, dtype=np.float64).reshape(3, 1) * float(angle)
        R, _ = cv2.Rodrigues(rvec)
        return R

    @staticmethod
    def rigid_transform(A, B):
        """
        Least-squares rigid transform mapping point set A onto B.

        Args:
            A, B: Corresponding points, arrays of shape (N, 3)

        Returns:
            Tuple (R, t) with B ~ A @ R.T + t
        """
        centroid_A = A.mean(axis=0)
        centroid_B = B.mean(axis=0)
        H = (A - centroid_A).T @ (B - centroid_B)
        U, _, Vt = np.linalg.svd(H)
        V = Vt.T
        d = np.sign(np.linalg.det(V @ U.T))
        if d == 0:
            d = 1.0
        R = V @ np.diag([1.0, 1.0, d]) @ U.T
        t = centroid_B - R @ centroid_A
        return R, t

    @staticmethod
    def is_rotation(R, tol=1e-9):
        """Check orthonormality and det = +1."""
        R = np.asarray(R, dtype=float)
        return (np.allclose(R @ R.T, np.eye(3), atol=tol)
                and abs(np.linalg.det(R) - 1.0) < tol)
