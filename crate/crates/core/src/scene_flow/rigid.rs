use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::RigidTransform;

use super::SceneFlowError;

/// Result of a robust rigid fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RigidEstimate {
    pub transform: RigidTransform,
    /// Indices of correspondences within the inlier tolerance of `transform`.
    pub inliers: Vec<usize>,
}

/// Closed-form least-squares rotation and translation taking `src[i]` to
/// `dst[i]` over `indices`.
///
/// Returns `None` when the centred cross-covariance has rank below 2
/// (coincident or collinear points), where the rotation is not determined.
pub fn kabsch(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    indices: &[usize],
) -> Option<RigidTransform> {
    let n = indices.len() as f64;
    if indices.is_empty() {
        return None;
    }
    let (mut cs, mut cd) = (Vector3::zeros(), Vector3::zeros());
    for &i in indices {
        cs += src[i];
        cd += dst[i];
    }
    cs /= n;
    cd /= n;
    let mut h = Matrix3::zeros();
    for &i in indices {
        h += (src[i] - cs) * (dst[i] - cd).transpose();
    }
    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    let largest = sv[order[0]];
    if !(largest > 0.0) || sv[order[1]] <= 1e-10 * largest {
        return None;
    }
    let u = svd.u?;
    let v = svd.v_t?.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(order[2], order[2])] = -1.0;
    }
    let rotation = v * d * u.transpose();
    Some(RigidTransform {
        rotation,
        translation: cd - rotation * cs,
    })
}

fn inliers_of(
    t: &RigidTransform,
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    tol: f64,
) -> Vec<usize> {
    (0..src.len())
        .filter(|&i| (t.apply(&src[i]) - dst[i]).norm() < tol)
        .collect()
}

/// RANSAC over 3-point Kabsch hypotheses, then a Kabsch re-fit on the best
/// consensus set. Deterministic for a fixed `seed`.
pub fn estimate_rigid(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    inlier_tol: f64,
    max_iters: usize,
    seed: u64,
) -> Result<RigidEstimate, SceneFlowError> {
    if src.len() != dst.len() {
        return Err(SceneFlowError::LengthMismatch(src.len(), dst.len()));
    }
    let n = src.len();
    if n < 3 {
        return Err(SceneFlowError::TooFewPoints(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Vec<usize>> = None;
    for _ in 0..max_iters {
        let sample = rand::seq::index::sample(&mut rng, n, 3).into_vec();
        let Some(model) = kabsch(src, dst, &sample) else {
            continue;
        };
        let inliers = inliers_of(&model, src, dst, inlier_tol);
        if best.as_ref().is_none_or(|b| inliers.len() > b.len()) {
            let all = inliers.len() == n;
            best = Some(inliers);
            if all {
                break;
            }
        }
    }
    let consensus = best.ok_or(SceneFlowError::DegenerateConfiguration)?;
    let transform = kabsch(src, dst, &consensus).ok_or(SceneFlowError::DegenerateConfiguration)?;
    let inliers = inliers_of(&transform, src, dst, inlier_tol);
    Ok(RigidEstimate { transform, inliers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use rand::Rng;

    fn random_transform(rng: &mut impl Rng) -> RigidTransform {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let r = Rotation3::new(axis.normalize() * rng.random_range(0.0..3.1));
        RigidTransform::new(
            *r.matrix(),
            Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ),
        )
        .unwrap()
    }

    fn random_points(rng: &mut impl Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn identity_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts = random_points(&mut rng, 20);
        let est = estimate_rigid(&pts, &pts, 1e-6, 64, 1).unwrap();
        let (ra, ta) = est.transform.distance(&RigidTransform::identity());
        assert!(ra < 1e-12 && ta < 1e-12);
        assert_eq!(est.inliers.len(), 20);
    }

    #[test]
    fn noiseless_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let truth = random_transform(&mut rng);
            let src = random_points(&mut rng, 50);
            let dst: Vec<_> = src.iter().map(|p| truth.apply(p)).collect();
            let est = estimate_rigid(&src, &dst, 1e-3, 256, 7).unwrap();
            let (ra, ta) = est.transform.distance(&truth);
            assert!(ra < 1e-9 && ta < 1e-9, "{ra} {ta}");
        }
    }

    #[test]
    fn contaminated_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = random_transform(&mut rng);
        let src = random_points(&mut rng, 50);
        let mut dst: Vec<_> = src.iter().map(|p| truth.apply(p)).collect();
        for d in dst.iter_mut().take(15) {
            *d = Vector3::new(
                rng.random_range(-6.0..6.0),
                rng.random_range(-6.0..6.0),
                rng.random_range(-6.0..6.0),
            );
        }
        let est = estimate_rigid(&src, &dst, 1e-3, 256, 3).unwrap();
        let (ra, ta) = est.transform.distance(&truth);
        assert!(ra < 1e-6 && ta < 1e-6);
        assert_eq!(est.inliers, (15..50).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_points() {
        let p = vec![Vector3::zeros(); 2];
        assert_eq!(
            estimate_rigid(&p, &p, 1.0, 10, 0),
            Err(SceneFlowError::TooFewPoints(2))
        );
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let src: Vec<_> = (0..10).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        assert_eq!(
            estimate_rigid(&src, &src, 1e-3, 32, 0),
            Err(SceneFlowError::DegenerateConfiguration)
        );
    }

    #[test]
    fn deterministic_under_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let truth = random_transform(&mut rng);
        let src = random_points(&mut rng, 30);
        let mut dst: Vec<_> = src.iter().map(|p| truth.apply(p)).collect();
        for d in dst.iter_mut().take(10) {
            *d += Vector3::new(0.5, -0.2, 0.1);
        }
        let a = estimate_rigid(&src, &dst, 1e-3, 256, 42).unwrap();
        let b = estimate_rigid(&src, &dst, 1e-3, 256, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn equivariant_under_conjugation() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let truth = random_transform(&mut rng);
            let g = random_transform(&mut rng);
            let src = random_points(&mut rng, 25);
            let dst: Vec<_> = src.iter().map(|p| truth.apply(p)).collect();
            let gs: Vec<_> = src.iter().map(|p| g.apply(p)).collect();
            let gd: Vec<_> = dst.iter().map(|p| g.apply(p)).collect();
            let base = estimate_rigid(&src, &dst, 1e-3, 256, 5).unwrap().transform;
            let conj = estimate_rigid(&gs, &gd, 1e-3, 256, 5).unwrap().transform;
            let expected = g.compose(&base).compose(&g.inverse());
            let (ra, ta) = conj.distance(&expected);
            assert!(ra < 1e-9 && ta < 1e-9, "{ra} {ta}");
        }
    }
}
