use rayon::prelude::*;

use super::skyline::{sym_matvec, Cholesky, Profile};
use super::{ElectrodeConfig, MeasurementFrame, StimulationPattern};
use crate::error::{EitError, Result};
use crate::mesh::Mesh;
use crate::scalar::Real;

/// Nodal and electrode potentials for one current injection.
#[derive(Debug, Clone, PartialEq)]
pub struct CemSolution<T> {
    pub potentials: Vec<T>,
    pub electrode_potentials: Vec<T>,
}

/// Dense `measurements x nodes` sensitivity matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Jacobian<T> {
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `J x`.
    pub fn mul(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| crate::scalar::dot(self.row(r), x))
            .collect()
    }

    /// `J^T y`.
    pub fn transpose_mul(&self, y: &[T]) -> Vec<T> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        T::gemm(1, self.rows, self.cols, T::one(), y, self.rows, 1, &self.data, self.cols, 1, T::zero(), &mut out, self.cols, 1);
        out
    }
}

struct ElementData<T> {
    nodes: [usize; 3],
    grads: [[T; 2]; 3],
    area: T,
    /// Storage slot of each local pair `(a, b)`.
    slots: [[usize; 3]; 3],
}

/// Mesh- and electrode-dependent parts of the CEM system, reused across
/// conductivities.
pub struct ForwardSolver<'a, T> {
    mesh: &'a Mesh<T>,
    config: ElectrodeConfig<T>,
    profile: Profile,
    base: Vec<T>,
    elements: Vec<ElementData<T>>,
}

impl<'a, T: Real> ForwardSolver<'a, T> {
    pub fn new(mesh: &'a Mesh<T>, config: &ElectrodeConfig<T>) -> Result<Self> {
        let l = mesh.electrode_count();
        config.validate(l)?;
        let n = mesh.node_count();
        let dim = n + l;

        let mut entries: Vec<(usize, usize)> = Vec::new();
        for t in &mesh.elements {
            for &a in t {
                for &b in t {
                    entries.push((a, b));
                }
            }
        }
        for (q, edges) in mesh.electrode_edges.iter().enumerate() {
            for &[a, b] in edges {
                entries.extend([(a, b), (a, a), (b, b), (n + q, a), (n + q, b)]);
            }
        }
        for q in 0..l {
            for p in 0..=q {
                entries.push((n + q, n + p));
            }
        }
        let profile = Profile::from_entries(dim, entries);

        let mut base = vec![T::zero(); profile.stored()];
        let mut gamma = T::zero();
        for (q, edges) in mesh.electrode_edges.iter().enumerate() {
            let inv_z = T::one() / config.contact_impedances[q];
            for &[a, b] in edges {
                let len = mesh.edge_length([a, b]);
                let m = len * inv_z / T::lit(6.0);
                base[profile.index(a, a)] += m + m;
                base[profile.index(b, b)] += m + m;
                base[profile.index(a, b)] += m;
                let half = len * inv_z * T::lit(0.5);
                base[profile.index(n + q, a)] -= half;
                base[profile.index(n + q, b)] -= half;
                base[profile.index(n + q, n + q)] += len * inv_z;
            }
            gamma += mesh.electrode_length(q) * inv_z;
        }
        gamma /= T::lit(l as f64);
        for q in 0..l {
            for p in 0..=q {
                base[profile.index(n + q, n + p)] += gamma;
            }
        }

        let elements = (0..mesh.element_count())
            .map(|e| {
                let nodes = mesh.elements[e];
                let (grads, area) = mesh.shape_gradients(e);
                let mut slots = [[0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        slots[a][b] = profile.index(nodes[a], nodes[b]);
                    }
                }
                ElementData { nodes, grads, area, slots }
            })
            .collect();

        Ok(Self {
            mesh,
            config: config.clone(),
            profile,
            base,
            elements,
        })
    }

    pub fn mesh(&self) -> &Mesh<T> {
        self.mesh
    }

    pub fn config(&self) -> &ElectrodeConfig<T> {
        &self.config
    }

    fn check_sigma(&self, sigma: &[T]) -> Result<()> {
        if sigma.len() != self.mesh.node_count() {
            return Err(EitError::Shape(format!(
                "{} conductivity values for {} nodes",
                sigma.len(),
                self.mesh.node_count()
            )));
        }
        if let Some((i, s)) = sigma.iter().enumerate().find(|(_, s)| !(**s > T::zero()) || !s.is_finite()) {
            return Err(EitError::Domain(format!("conductivity {s} at node {i} is not positive")));
        }
        Ok(())
    }

    /// Lower triangle of the full system matrix for the given conductivity.
    pub fn assemble(&self, sigma: &[T]) -> Result<Vec<T>> {
        self.check_sigma(sigma)?;
        let mut values = self.base.clone();
        let third = T::one() / T::lit(3.0);
        for el in &self.elements {
            let mean = (sigma[el.nodes[0]] + sigma[el.nodes[1]] + sigma[el.nodes[2]]) * third;
            let scale = mean * el.area;
            for a in 0..3 {
                for b in 0..=a {
                    let g = el.grads[a][0] * el.grads[b][0] + el.grads[a][1] * el.grads[b][1];
                    values[el.slots[a][b]] += scale * g;
                }
            }
        }
        Ok(values)
    }

    pub fn factor(&self, sigma: &[T]) -> Result<Factored<'_, 'a, T>> {
        let values = self.assemble(sigma)?;
        let chol = Cholesky::factor(self.profile.clone(), values)?;
        Ok(Factored { solver: self, chol })
    }

    /// Relative residual `|A x - b| / |b|` of a solution, for diagnostics.
    pub fn relative_residual(&self, sigma: &[T], x: &[T], b: &[T]) -> Result<T> {
        let values = self.assemble(sigma)?;
        let ax = sym_matvec(&self.profile, &values, x);
        let num: T = ax.iter().zip(b).map(|(p, q)| (*p - *q) * (*p - *q)).sum();
        let den: T = b.iter().map(|v| *v * *v).sum();
        Ok((num / den).sqrt())
    }

    pub fn simulate(&self, sigma: &[T], pattern: &StimulationPattern) -> Result<Vec<T>> {
        let f = self.factor(sigma)?;
        let fields = f.pattern_fields(pattern)?;
        Ok(fields.voltages(pattern, self.config.amplitude, self.mesh.node_count()))
    }

    /// Voltages and sensitivity matrix from a single factorization.
    pub fn simulate_with_jacobian(&self, sigma: &[T], pattern: &StimulationPattern) -> Result<(Vec<T>, Jacobian<T>)> {
        let f = self.factor(sigma)?;
        let fields = f.pattern_fields(pattern)?;
        let n = self.mesh.node_count();
        let v = fields.voltages(pattern, self.config.amplitude, n);
        let j = self.jacobian_from_fields(&fields, pattern);
        Ok((v, j))
    }

    fn jacobian_from_fields(&self, fields: &PatternFields<T>, pattern: &StimulationPattern) -> Jacobian<T> {
        let n = self.mesh.node_count();
        // Per-element gradient of every unit field.
        let grads: Vec<Vec<[T; 2]>> = fields
            .solutions
            .par_iter()
            .map(|u| {
                self.elements
                    .iter()
                    .map(|el| {
                        let mut g = [T::zero(); 2];
                        for a in 0..3 {
                            let ua = u[el.nodes[a]];
                            g[0] += ua * el.grads[a][0];
                            g[1] += ua * el.grads[a][1];
                        }
                        g
                    })
                    .collect()
            })
            .collect();
        let rows: Vec<(usize, usize)> = pattern
            .injections
            .iter()
            .zip(&pattern.measurements)
            .flat_map(|(&inj, meas)| meas.iter().map(move |&m| (inj, m)))
            .map(|(inj, m)| (fields.index_of(inj), fields.index_of(m)))
            .collect();
        let scale = -self.config.amplitude / T::lit(3.0);
        let mut data = vec![T::zero(); rows.len() * n];
        data.par_chunks_mut(n).zip(rows.par_iter()).for_each(|(out, &(fi, fm))| {
            let (gi, gm) = (&grads[fi], &grads[fm]);
            for (e, el) in self.elements.iter().enumerate() {
                let c = scale * el.area * (gi[e][0] * gm[e][0] + gi[e][1] * gm[e][1]);
                for &node in &el.nodes {
                    out[node] += c;
                }
            }
        });
        Jacobian { rows: rows.len(), cols: n, data }
    }
}

/// A factored system for one conductivity.
pub struct Factored<'s, 'a, T> {
    solver: &'s ForwardSolver<'a, T>,
    chol: Cholesky<T>,
}

struct PatternFields<T> {
    pairs: Vec<(usize, usize)>,
    solutions: Vec<Vec<T>>,
}

impl<T: Real> PatternFields<T> {
    fn index_of(&self, pair: (usize, usize)) -> usize {
        self.pairs.iter().position(|&p| p == pair).expect("pair solved")
    }

    fn voltages(&self, pattern: &StimulationPattern, amplitude: T, n: usize) -> Vec<T> {
        let mut out = Vec::with_capacity(pattern.measurement_count());
        for (&inj, meas) in pattern.injections.iter().zip(&pattern.measurements) {
            let u = &self.solutions[self.index_of(inj)];
            for &(p, m) in meas {
                out.push(amplitude * (u[n + p] - u[n + m]));
            }
        }
        out
    }
}

impl<'s, 'a, T: Real> Factored<'s, 'a, T> {
    fn rhs(&self, (source, sink): (usize, usize), current: T) -> Vec<T> {
        let n = self.solver.mesh.node_count();
        let mut b = vec![T::zero(); self.chol.dim()];
        b[n + source] += current;
        b[n + sink] -= current;
        b
    }

    /// Full solution vector (nodes then electrodes) for a current `current`
    /// entering `source` and leaving `sink`.
    pub fn solve_raw(&self, injection: (usize, usize), current: T) -> (Vec<T>, Vec<T>) {
        let b = self.rhs(injection, current);
        (self.chol.solve(&b), b)
    }

    pub fn solve(&self, injection: (usize, usize)) -> CemSolution<T> {
        let n = self.solver.mesh.node_count();
        let (x, _) = self.solve_raw(injection, self.solver.config.amplitude);
        CemSolution {
            potentials: x[..n].to_vec(),
            electrode_potentials: x[n..].to_vec(),
        }
    }

    fn pattern_fields(&self, pattern: &StimulationPattern) -> Result<PatternFields<T>> {
        pattern.validate()?;
        let l = self.solver.mesh.electrode_count();
        if pattern.electrode_count != l {
            return Err(EitError::Shape(format!(
                "pattern for {} electrodes on a mesh with {l}",
                pattern.electrode_count
            )));
        }
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        for (&inj, meas) in pattern.injections.iter().zip(&pattern.measurements) {
            for p in std::iter::once(inj).chain(meas.iter().copied()) {
                if !pairs.contains(&p) {
                    pairs.push(p);
                }
            }
        }
        let solutions = pairs
            .par_iter()
            .map(|&p| self.chol.solve(&self.rhs(p, T::one())))
            .collect();
        Ok(PatternFields { pairs, solutions })
    }
}

pub fn assemble_and_solve<T: Real>(
    mesh: &Mesh<T>,
    sigma: &[T],
    config: &ElectrodeConfig<T>,
    injection: (usize, usize),
) -> Result<CemSolution<T>> {
    let l = mesh.electrode_count();
    if injection.0 == injection.1 || injection.0 >= l || injection.1 >= l {
        return Err(EitError::Domain(format!("invalid injection pair {injection:?}")));
    }
    let solver = ForwardSolver::new(mesh, config)?;
    Ok(solver.factor(sigma)?.solve(injection))
}

pub fn solve_forward<T: Real>(
    mesh: &Mesh<T>,
    sigma: &[T],
    config: &ElectrodeConfig<T>,
    pattern: &StimulationPattern,
) -> Result<MeasurementFrame<T>> {
    let solver = ForwardSolver::new(mesh, config)?;
    let voltages = solver.simulate(sigma, pattern)?;
    Ok(MeasurementFrame::new(voltages, pattern.electrode_count))
}

/// Sensitivity `dV_i / d sigma_j` by the adjoint (measurement-field) method.
pub fn compute_jacobian<T: Real>(
    mesh: &Mesh<T>,
    sigma: &[T],
    config: &ElectrodeConfig<T>,
    pattern: &StimulationPattern,
) -> Result<Jacobian<T>> {
    let solver = ForwardSolver::new(mesh, config)?;
    Ok(solver.simulate_with_jacobian(sigma, pattern)?.1)
}
