//! Implicit surface primitives and the I-patch blend.
//!
//! Every surface exposes two evaluations:
//!
//! * [`ImplicitSurface::value`] is the algebraic field (polynomial form for
//!   Liming surfaces, I-lofts and I-patches);
//! * [`ImplicitSurface::distance`] is the distance-like field used when the
//!   surface is a component of an I-patch. Planes and Liming surfaces return
//!   their algebraic value, I-lofts and I-patches their faithful
//!   (blend-normalized) value.
//!
//! I-patch components always enter through `distance`, so an I-patch built
//! from planes and I-lofts has a faithful field that offsets exactly.

use std::sync::Arc;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{normalize, Point, Vector};

/// Anything that can be evaluated as a differentiable scalar field.
pub trait ScalarField: Sync {
    fn value(&self, p: &Point) -> f64;

    fn gradient(&self, p: &Point) -> Vector;

    /// Characteristic length used for finite-difference steps.
    fn length_scale(&self) -> f64 {
        1.0
    }

    /// Hessian by central differences of the analytic gradient.
    fn hessian(&self, p: &Point) -> Matrix3<f64> {
        let h = 1e-5 * self.length_scale();
        let mut m = Matrix3::zeros();
        for k in 0..3 {
            let mut e = Vector::zeros();
            e[k] = h;
            let col = (self.gradient(&(p + e)) - self.gradient(&(p - e))) / (2.0 * h);
            m.set_column(k, &col);
        }
        // symmetrize away the differencing noise
        (m + m.transpose()) * 0.5
    }
}

/// Oriented plane `normal · x + offset`; the value is the signed distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    normal: Vector,
    offset: f64,
}

impl Plane {
    /// Plane with the given normal (normalized here) and offset, or `None`
    /// for a vanishing normal.
    pub fn new(normal: Vector, offset: f64) -> Option<Self> {
        let len = normal.norm();
        (len > 1e-300 && len.is_finite()).then(|| Plane {
            normal: normal / len,
            offset: offset / len,
        })
    }

    /// Plane through `point` with the given (not necessarily unit) normal.
    pub fn through(point: &Point, normal: &Vector) -> Option<Self> {
        let n = normalize(normal, 1e-300)?;
        Some(Plane {
            normal: n,
            offset: -n.dot(&point.coords),
        })
    }

    pub fn normal(&self) -> &Vector {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    #[inline]
    pub fn value(&self, p: &Point) -> f64 {
        self.normal.dot(&p.coords) + self.offset
    }

    /// The plane whose value is `self.value(p) - d` everywhere.
    pub fn shifted(&self, d: f64) -> Plane {
        Plane {
            normal: self.normal,
            offset: self.offset - d,
        }
    }

    pub fn flipped(&self) -> Plane {
        Plane {
            normal: -self.normal,
            offset: -self.offset,
        }
    }

    pub fn project(&self, p: &Point) -> Point {
        p - self.normal * self.value(p)
    }
}

/// Conic-sweeping quadric `(1-λ)·π₁·π₂ − λ·π̃²` built from two corner planes
/// and a cutting plane. `sign` (±1) orients the field so it grows toward the
/// corner normals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimingSurface {
    pub pi1: Plane,
    pub pi2: Plane,
    pub cut: Plane,
    pub lambda: f64,
    #[serde(default = "one")]
    pub sign: f64,
}

fn one() -> f64 {
    1.0
}

impl LimingSurface {
    /// Builds the surface and picks the orientation from the corner data:
    /// the gradient at corner 1 is `(1-λ)·π₂(p₁)·n₁`, so the sign of
    /// `π₂(p₁)` decides whether the raw field must be negated.
    pub fn new(pi1: Plane, pi2: Plane, cut: Plane, lambda: f64, p1: &Point) -> Self {
        let sign = if pi2.value(p1) < 0.0 { -1.0 } else { 1.0 };
        LimingSurface {
            pi1,
            pi2,
            cut,
            lambda,
            sign,
        }
    }

    pub fn value(&self, p: &Point) -> f64 {
        let a = self.pi1.value(p);
        let b = self.pi2.value(p);
        let c = self.cut.value(p);
        self.sign * ((1.0 - self.lambda) * a * b - self.lambda * c * c)
    }

    pub fn gradient(&self, p: &Point) -> Vector {
        let a = self.pi1.value(p);
        let b = self.pi2.value(p);
        let c = self.cut.value(p);
        let g = (self.pi1.normal * b + self.pi2.normal * a) * (1.0 - self.lambda)
            - self.cut.normal * (2.0 * self.lambda * c);
        g * self.sign
    }

    pub fn hessian(&self) -> Matrix3<f64> {
        let (na, nb, nc) = (self.pi1.normal, self.pi2.normal, self.cut.normal);
        let h = (nb * na.transpose() + na * nb.transpose()) * (1.0 - self.lambda)
            - nc * nc.transpose() * (2.0 * self.lambda);
        h * self.sign
    }

    /// First-order (gradient-normalized) distance estimate.
    pub fn normalized_value(&self, p: &Point, min_gradient: f64) -> f64 {
        let v = self.value(p);
        if v == 0.0 {
            return 0.0;
        }
        v / self.gradient(p).norm().max(min_gradient)
    }

    /// Signed distance to the zero set along the gradient line through `p`.
    /// The field is quadratic, so the root on that line is exact; where the
    /// line misses the surface the first-order estimate is returned.
    pub fn ray_distance(&self, p: &Point, min_gradient: f64) -> f64 {
        let v = self.value(p);
        if v == 0.0 {
            return 0.0;
        }
        let grad = self.gradient(p);
        let g = grad.norm();
        if g <= min_gradient {
            return v / min_gradient;
        }
        let n = grad / g;
        let h = (n.transpose() * self.hessian() * n)[0];
        let disc = g * g - 2.0 * h * v;
        if disc < 0.0 {
            return v / g;
        }
        // smaller root of v + g·t + h·t²/2 = 0, in cancellation-free form
        2.0 * v / (g + disc.sqrt())
    }
}

/// Two-sided I-patch over planes: `w₁·π₁·π̃₂² + w₂·π₂·π̃₁² − π̃₁²·π̃₂²`.
///
/// `pi1`, `pi2` are the corner tangent planes and `b1`, `b2` the local
/// bounding planes through the corresponding corners. Both weights share
/// one sign; negative weights bend the curve toward the negative side of the
/// tangent planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ILoft {
    pub pi1: Plane,
    pub pi2: Plane,
    pub b1: Plane,
    pub b2: Plane,
    pub w1: f64,
    pub w2: f64,
}

impl ILoft {
    pub fn value(&self, p: &Point) -> f64 {
        let (r1, r2) = (self.pi1.value(p), self.pi2.value(p));
        let (s1, s2) = (self.b1.value(p).powi(2), self.b2.value(p).powi(2));
        self.w1 * r1 * s2 + self.w2 * r2 * s1 - s1 * s2
    }

    pub fn gradient(&self, p: &Point) -> Vector {
        self.numerator_denominator(p).2
    }

    /// Numerator, denominator and their gradients of the faithful form.
    fn numerator_denominator(&self, p: &Point) -> (f64, f64, Vector, Vector) {
        let (r1, r2) = (self.pi1.value(p), self.pi2.value(p));
        let (q1, q2) = (self.b1.value(p), self.b2.value(p));
        let (s1, s2) = (q1 * q1, q2 * q2);
        let (g1, g2) = (self.b1.normal * (2.0 * q1), self.b2.normal * (2.0 * q2));
        let num = self.w1 * r1 * s2 + self.w2 * r2 * s1 - s1 * s2;
        let den = self.w1 * s2 + self.w2 * s1;
        let dnum = (self.pi1.normal * s2 + g2 * r1) * self.w1
            + (self.pi2.normal * s1 + g1 * r2) * self.w2
            - (g1 * s2 + g2 * s1);
        let dden = g2 * self.w1 + g1 * self.w2;
        (num, den, dnum, dden)
    }

    /// Faithful (blend-normalized) value; near the corners it reduces to the
    /// tangent-plane distance.
    pub fn faithful(&self, p: &Point) -> f64 {
        let (num, den, _, _) = self.numerator_denominator(p);
        num / den
    }

    pub fn faithful_gradient(&self, p: &Point) -> Vector {
        let (num, den, dnum, dden) = self.numerator_denominator(p);
        (dnum - dden * (num / den)) / den
    }

    /// Same blend around tangent planes displaced by `d`; its faithful value
    /// is exactly `faithful(p) - d`.
    pub fn offset(&self, d: f64) -> ILoft {
        ILoft {
            pi1: self.pi1.shifted(d),
            pi2: self.pi2.shifted(d),
            ..self.clone()
        }
    }
}

/// One ribbon/bounding pair of an I-patch.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Side {
    pub ribbon: Arc<ImplicitSurface>,
    pub bounding: Arc<ImplicitSurface>,
    /// Negate the bounding field so it is positive toward the patch interior.
    #[serde(default)]
    pub flip_bounding: bool,
}

impl Side {
    pub fn new(ribbon: Arc<ImplicitSurface>, bounding: Arc<ImplicitSurface>, flip: bool) -> Self {
        Side {
            ribbon,
            bounding,
            flip_bounding: flip,
        }
    }

    #[inline]
    pub fn ribbon_value(&self, p: &Point) -> f64 {
        self.ribbon.distance(p)
    }

    #[inline]
    pub fn bounding_value(&self, p: &Point) -> f64 {
        let b = self.bounding.distance(p);
        if self.flip_bounding {
            -b
        } else {
            b
        }
    }

    fn bounding_gradient(&self, p: &Point) -> Vector {
        let g = self.bounding.distance_gradient(p);
        if self.flip_bounding {
            -g
        } else {
            g
        }
    }
}

/// Component values of an I-patch at one point.
#[derive(Debug, Clone, Default)]
pub struct Components {
    pub ribbons: Vec<f64>,
    pub boundings: Vec<f64>,
}

/// n-sided I-patch: zero set of `Σ wᵢ·Rᵢ·∏_{j≠i} Bⱼ² − w₀·∏ Bᵢ²`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IPatchDef {
    sides: Vec<Side>,
    /// `weights[0]` is w₀, `weights[i]` belongs to side `i - 1`.
    weights: Vec<f64>,
    /// Diagonal of the corner bounding box; sets the switching and
    /// degeneracy thresholds.
    scale: f64,
}

const PROBES: [[f64; 3]; 4] = [
    [0.31, 0.17, 0.23],
    [-0.41, 0.29, 0.11],
    [0.13, -0.37, 0.43],
    [0.27, 0.33, -0.39],
];

impl IPatchDef {
    pub fn new(sides: Vec<Side>, weights: Vec<f64>, scale: f64) -> Result<Self> {
        let n = sides.len();
        if n < 2 {
            return Err(Error::InvalidPatch(format!("{n} sides, at least 2 needed")));
        }
        if weights.len() != n + 1 {
            return Err(Error::InvalidPatch(format!(
                "{} weights for {n} sides",
                weights.len()
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidPatch(format!("scale {scale}")));
        }
        check_weights(&weights)?;
        let def = IPatchDef {
            sides,
            weights,
            scale,
        };
        def.check_coincident_boundings()?;
        Ok(def)
    }

    fn check_coincident_boundings(&self) -> Result<()> {
        let probes: Vec<Point> = PROBES
            .iter()
            .map(|c| Point::new(c[0], c[1], c[2]) * self.scale)
            .collect();
        let values: Vec<Vec<f64>> = self
            .sides
            .iter()
            .map(|s| probes.iter().map(|p| s.bounding_value(p)).collect())
            .collect();
        let tol = 1e-9 * self.scale;
        for i in 0..values.len() {
            for j in i + 1..values.len() {
                let same = values[i].iter().zip(&values[j]).all(|(a, b)| (a - b).abs() <= tol);
                let opposite = values[i].iter().zip(&values[j]).all(|(a, b)| (a + b).abs() <= tol);
                if same || opposite {
                    return Err(Error::CoincidentBoundings {
                        first: i,
                        second: j,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn sides(&self) -> &[Side] {
        &self.sides
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn len(&self) -> usize {
        self.sides.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sides.is_empty()
    }

    /// Copy sharing the same component surfaces but with other weights.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.weights.len() {
            return Err(Error::InvalidPatch("weight count mismatch".into()));
        }
        check_weights(&weights)?;
        Ok(IPatchDef {
            sides: self.sides.clone(),
            weights,
            scale: self.scale,
        })
    }

    /// Switching threshold between the rational and polynomial faithful forms.
    pub fn eps_bounding(&self) -> f64 {
        1e-6 * self.scale
    }

    /// Threshold below which the polynomial denominator counts as zero.
    pub fn denominator_floor(&self) -> f64 {
        1e-14 * self.scale.powi(self.sides.len() as i32)
    }

    pub fn components(&self, p: &Point) -> Components {
        Components {
            ribbons: self.sides.iter().map(|s| s.ribbon_value(p)).collect(),
            boundings: self.sides.iter().map(|s| s.bounding_value(p)).collect(),
        }
    }

    /// True when every bounding is non-negative at `p` (within `eps`).
    pub fn in_domain(&self, p: &Point, eps: f64) -> bool {
        self.sides.iter().all(|s| s.bounding_value(p) >= -eps)
    }

    /// Polynomial field, accumulated with prefix/suffix products of `Bⱼ²`.
    pub fn value(&self, p: &Point) -> f64 {
        let c = self.components(p);
        let n = c.ribbons.len();
        let sq: Vec<f64> = c.boundings.iter().map(|b| b * b).collect();
        let mut suffix = vec![1.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] * sq[i];
        }
        let mut prefix = 1.0;
        let mut sum = 0.0;
        for i in 0..n {
            sum += self.weights[i + 1] * c.ribbons[i] * prefix * suffix[i + 1];
            prefix *= sq[i];
        }
        sum - self.weights[0] * prefix
    }

    pub fn gradient(&self, p: &Point) -> Vector {
        self.parts_with_gradients(p).2
    }

    /// Numerator (the polynomial field) and denominator `Σ wᵢ ∏_{j≠i} Bⱼ²`
    /// of the polynomial faithful form, from explicit excluded products.
    pub fn faithful_parts(&self, p: &Point) -> (f64, f64) {
        let c = self.components(p);
        parts_from_components(&c.ribbons, &c.boundings, &self.weights)
    }

    fn parts_with_gradients(&self, p: &Point) -> (f64, f64, Vector, Vector) {
        let n = self.sides.len();
        let r: Vec<f64> = self.sides.iter().map(|s| s.ribbon_value(p)).collect();
        let gr: Vec<Vector> = self.sides.iter().map(|s| s.ribbon.distance_gradient(p)).collect();
        let b: Vec<f64> = self.sides.iter().map(|s| s.bounding_value(p)).collect();
        let gb: Vec<Vector> = self.sides.iter().map(|s| s.bounding_gradient(p)).collect();
        let sq: Vec<f64> = b.iter().map(|v| v * v).collect();

        let excluded = |skip: &[usize]| -> f64 {
            (0..n)
                .filter(|j| !skip.contains(j))
                .map(|j| sq[j])
                .product()
        };

        let mut num = 0.0;
        let mut den = 0.0;
        let mut dnum = Vector::zeros();
        let mut dden = Vector::zeros();
        let mut dall = Vector::zeros();
        let all = excluded(&[]);
        for i in 0..n {
            let w = self.weights[i + 1];
            let pi = excluded(&[i]);
            let mut dpi = Vector::zeros();
            for k in 0..n {
                if k != i {
                    dpi += gb[k] * (2.0 * b[k] * excluded(&[i, k]));
                }
            }
            num += w * r[i] * pi;
            den += w * pi;
            dnum += (gr[i] * pi + dpi * r[i]) * w;
            dden += dpi * w;
            dall += gb[i] * (2.0 * b[i] * pi);
        }
        let w0 = self.weights[0];
        num -= w0 * all;
        dnum -= dall * w0;
        (num, den, dnum, dden)
    }

    /// Rational faithful form `(Σ Rᵢαᵢ − w₀) / Σ αᵢ` with `αᵢ = wᵢ/Bᵢ²`.
    /// Undefined (non-finite) on bounding surfaces.
    pub fn faithful_rational(&self, p: &Point) -> f64 {
        let c = self.components(p);
        rational_from_components(&c.ribbons, &c.boundings, &self.weights)
    }

    /// Polynomial faithful form; defined on the boundary curves as well.
    pub fn faithful_polynomial(&self, p: &Point) -> Result<f64> {
        let (num, den) = self.faithful_parts(p);
        self.divide(num, den)
    }

    fn divide(&self, num: f64, den: f64) -> Result<f64> {
        if !(den.abs() >= self.denominator_floor()) {
            return Err(Error::DegenerateDenominator { value: den });
        }
        Ok(num / den)
    }

    /// Faithful distance estimate. Uses the rational form away from the
    /// bounding surfaces and the polynomial form close to them.
    pub fn faithful(&self, p: &Point) -> Result<f64> {
        let c = self.components(p);
        faithful_from_components(
            &c.ribbons,
            &c.boundings,
            &self.weights,
            self.eps_bounding(),
            self.denominator_floor(),
        )
    }

    pub fn faithful_gradient(&self, p: &Point) -> Result<Vector> {
        let (num, den, dnum, dden) = self.parts_with_gradients(p);
        let v = self.divide(num, den)?;
        Ok((dnum - dden * v) / den)
    }

    /// Patch whose faithful field is `faithful(p) − d`: same boundings and
    /// weights, every ribbon replaced by its offset.
    pub fn offset(&self, d: f64) -> Result<IPatchDef> {
        if d == 0.0 {
            return Ok(self.clone());
        }
        let mut sides = Vec::with_capacity(self.sides.len());
        for (i, s) in self.sides.iter().enumerate() {
            let ribbon = s.ribbon.offset(d).map_err(|e| match e {
                Error::UnsupportedOffset { kind, .. } => Error::UnsupportedOffset { side: i, kind },
                other => other,
            })?;
            sides.push(Side {
                ribbon: Arc::new(ribbon),
                bounding: s.bounding.clone(),
                flip_bounding: s.flip_bounding,
            });
        }
        Ok(IPatchDef {
            sides,
            weights: self.weights.clone(),
            scale: self.scale,
        })
    }
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if !weights[0].is_finite() {
        return Err(Error::InvalidPatch(format!("w0 = {}", weights[0])));
    }
    for (i, w) in weights.iter().enumerate().skip(1) {
        if !(*w > 0.0 && w.is_finite()) {
            return Err(Error::InvalidPatch(format!("w{i} = {w} is not positive")));
        }
    }
    Ok(())
}

/// Polynomial numerator and denominator from precomputed component values.
pub fn parts_from_components(r: &[f64], b: &[f64], weights: &[f64]) -> (f64, f64) {
    let n = r.len();
    let mut num = 0.0;
    let mut den = 0.0;
    let mut all = 1.0;
    for i in 0..n {
        let mut pi = 1.0;
        for (j, bj) in b.iter().enumerate() {
            if j != i {
                pi *= bj * bj;
            }
        }
        num += weights[i + 1] * r[i] * pi;
        den += weights[i + 1] * pi;
        all *= b[i] * b[i];
    }
    (num - weights[0] * all, den)
}

/// Rational faithful value from precomputed component values.
pub fn rational_from_components(r: &[f64], b: &[f64], weights: &[f64]) -> f64 {
    let mut num = -weights[0];
    let mut den = 0.0;
    for i in 0..r.len() {
        let alpha = weights[i + 1] / (b[i] * b[i]);
        num += r[i] * alpha;
        den += alpha;
    }
    num / den
}

/// Faithful value from precomputed components, with the form switch.
pub fn faithful_from_components(
    r: &[f64],
    b: &[f64],
    weights: &[f64],
    eps_bounding: f64,
    denominator_floor: f64,
) -> Result<f64> {
    let min_b = b.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min_b > eps_bounding {
        return Ok(rational_from_components(r, b, weights));
    }
    let (num, den) = parts_from_components(r, b, weights);
    if !(den.abs() >= denominator_floor) {
        return Err(Error::DegenerateDenominator { value: den });
    }
    Ok(num / den)
}

/// Uniform surface abstraction over the supported primitives.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImplicitSurface {
    Plane(Plane),
    Liming(LimingSurface),
    #[serde(rename = "iloft")]
    ILoft(ILoft),
    #[serde(rename = "ipatch")]
    IPatch(IPatchDef),
}

impl ImplicitSurface {
    pub fn kind(&self) -> &'static str {
        match self {
            ImplicitSurface::Plane(_) => "plane",
            ImplicitSurface::Liming(_) => "liming",
            ImplicitSurface::ILoft(_) => "iloft",
            ImplicitSurface::IPatch(_) => "ipatch",
        }
    }

    /// Algebraic field value.
    pub fn value(&self, p: &Point) -> f64 {
        match self {
            ImplicitSurface::Plane(s) => s.value(p),
            ImplicitSurface::Liming(s) => s.value(p),
            ImplicitSurface::ILoft(s) => s.value(p),
            ImplicitSurface::IPatch(s) => s.value(p),
        }
    }

    /// Analytic gradient of [`value`](Self::value).
    pub fn gradient(&self, p: &Point) -> Vector {
        match self {
            ImplicitSurface::Plane(s) => s.normal,
            ImplicitSurface::Liming(s) => s.gradient(p),
            ImplicitSurface::ILoft(s) => s.gradient(p),
            ImplicitSurface::IPatch(s) => s.gradient(p),
        }
    }

    /// Distance-like field used when this surface is an I-patch component.
    pub fn distance(&self, p: &Point) -> f64 {
        match self {
            ImplicitSurface::Plane(s) => s.value(p),
            ImplicitSurface::Liming(s) => s.value(p),
            ImplicitSurface::ILoft(s) => s.faithful(p),
            ImplicitSurface::IPatch(s) => s.faithful(p).unwrap_or(f64::NAN),
        }
    }

    pub fn distance_gradient(&self, p: &Point) -> Vector {
        match self {
            ImplicitSurface::Plane(s) => s.normal,
            ImplicitSurface::Liming(s) => s.gradient(p),
            ImplicitSurface::ILoft(s) => s.faithful_gradient(p),
            ImplicitSurface::IPatch(s) => s
                .faithful_gradient(p)
                .unwrap_or_else(|_| Vector::repeat(f64::NAN)),
        }
    }

    /// Surface whose distance field is `distance(p) − d`.
    pub fn offset(&self, d: f64) -> Result<ImplicitSurface> {
        Ok(match self {
            ImplicitSurface::Plane(s) => ImplicitSurface::Plane(s.shifted(d)),
            ImplicitSurface::ILoft(s) => ImplicitSurface::ILoft(s.offset(d)),
            ImplicitSurface::IPatch(s) => ImplicitSurface::IPatch(s.offset(d)?),
            ImplicitSurface::Liming(_) if d == 0.0 => self.clone(),
            ImplicitSurface::Liming(_) => {
                return Err(Error::UnsupportedOffset {
                    side: 0,
                    kind: "liming",
                })
            }
        })
    }
}

impl ScalarField for ImplicitSurface {
    fn value(&self, p: &Point) -> f64 {
        ImplicitSurface::value(self, p)
    }

    fn gradient(&self, p: &Point) -> Vector {
        ImplicitSurface::gradient(self, p)
    }

    fn length_scale(&self) -> f64 {
        match self {
            ImplicitSurface::IPatch(s) => s.scale,
            _ => 1.0,
        }
    }

    fn hessian(&self, p: &Point) -> Matrix3<f64> {
        match self {
            ImplicitSurface::Plane(_) => Matrix3::zeros(),
            ImplicitSurface::Liming(s) => s.hessian(),
            _ => fd_hessian(self, p),
        }
    }
}

impl ScalarField for Plane {
    fn value(&self, p: &Point) -> f64 {
        Plane::value(self, p)
    }

    fn gradient(&self, _p: &Point) -> Vector {
        self.normal
    }

    fn hessian(&self, _p: &Point) -> Matrix3<f64> {
        Matrix3::zeros()
    }
}

/// Faithful field of an I-patch as a [`ScalarField`] (NaN where undefined).
#[derive(Debug, Clone, Copy)]
pub struct Faithful<'a>(pub &'a IPatchDef);

impl ScalarField for Faithful<'_> {
    fn value(&self, p: &Point) -> f64 {
        self.0.faithful(p).unwrap_or(f64::NAN)
    }

    fn gradient(&self, p: &Point) -> Vector {
        self.0
            .faithful_gradient(p)
            .unwrap_or_else(|_| Vector::repeat(f64::NAN))
    }

    fn length_scale(&self) -> f64 {
        self.0.scale
    }
}

/// Field given by a pair of closures; handy for analytic test fields.
pub struct FnField<V, G> {
    pub value: V,
    pub gradient: G,
}

impl<V, G> ScalarField for FnField<V, G>
where
    V: Fn(&Point) -> f64 + Sync,
    G: Fn(&Point) -> Vector + Sync,
{
    fn value(&self, p: &Point) -> f64 {
        (self.value)(p)
    }

    fn gradient(&self, p: &Point) -> Vector {
        (self.gradient)(p)
    }
}

fn fd_hessian<F: ScalarField + ?Sized>(f: &F, p: &Point) -> Matrix3<f64> {
    let h = 1e-5 * f.length_scale();
    let mut m = Matrix3::zeros();
    for k in 0..3 {
        let mut e = Vector::zeros();
        e[k] = h;
        let col = (f.gradient(&(p + e)) - f.gradient(&(p - e))) / (2.0 * h);
        m.set_column(k, &col);
    }
    (m + m.transpose()) * 0.5
}

/// Mean curvature `(κ₁+κ₂)/2` of the level set through `p`, positive for a
/// sphere whose field grows outward.
pub fn mean_curvature<F: ScalarField + ?Sized>(f: &F, p: &Point) -> Result<f64> {
    let g = f.gradient(p);
    let norm = g.norm();
    if !(norm > 1e-10) {
        return Err(Error::SingularGradient { norm });
    }
    let h = f.hessian(p);
    let ghg = (g.transpose() * h * g)[0];
    Ok((norm * norm * h.trace() - ghg) / (2.0 * norm.powi(3)))
}

/// Normal curvature of the level set through `p` along tangent `dir`, with
/// the same sign convention as [`mean_curvature`].
pub fn normal_curvature<F: ScalarField + ?Sized>(f: &F, p: &Point, dir: &Vector) -> Result<f64> {
    let g = f.gradient(p);
    let norm = g.norm();
    if !(norm > 1e-10) {
        return Err(Error::SingularGradient { norm });
    }
    let n = g / norm;
    let t = dir - n * n.dot(dir);
    let t = normalize(&t, 1e-300).ok_or(Error::SingularGradient { norm: 0.0 })?;
    let h = f.hessian(p);
    Ok((t.transpose() * h * t)[0] / norm)
}
